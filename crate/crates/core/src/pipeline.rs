//! Recordings to feature matrix: clean, label, window, extract.

use crate::hrv::{extract_feature_matrix, FeatureMatrix, MatrixError, WindowSpec};
use crate::ingest::{clean_ibi, join_all, AnnotationTrack, FilterPolicy, IbiSeries, IngestError};
use crate::synth::Cohort;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub fn matrix_from_recordings(
    series: &[IbiSeries],
    tracks: &[AnnotationTrack],
    policy: &FilterPolicy,
    window: &WindowSpec,
) -> Result<FeatureMatrix, PipelineError> {
    let cleaned = series
        .iter()
        .map(|s| clean_ibi(s, policy))
        .collect::<Result<Vec<_>, _>>()?;
    let labeled = join_all(&cleaned, tracks, window.seed_ms())?;
    Ok(extract_feature_matrix(&labeled, window)?)
}

pub fn cohort_matrix(cohort: &Cohort, window: &WindowSpec) -> Result<FeatureMatrix, PipelineError> {
    matrix_from_recordings(&cohort.series, &cohort.tracks, &FilterPolicy::default(), window)
}

//! Thermal-comfort prediction from heart rate variability.
//!
//! The pipeline runs from interbeat-interval streams ([`ingest`], [`synth`])
//! through per-beat sliding-window HRV features ([`hrv`]) into from-scratch
//! tree ensembles ([`trees`]), evaluated under generic, person-specific and
//! calibrated regimes ([`eval`]).

pub mod eval;
pub mod hrv;
pub mod ingest;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod trees;

pub use ingest::{
    clean_ibi, join_labels, parse_ibi_dataset, AnnotationTrack, ComfortAnnotation,
    ConditionLabel, FilterPolicy, IbiSample, IbiSeries, IngestError, LabeledSeries,
};

#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, OnceLock};

use comfort_core::hrv::{FeatureMatrix, WindowSpec};
use comfort_core::pipeline::cohort_matrix;
use comfort_core::synth::{synthesize_cohort, Cohort, CohortSpec};
use comfort_core::trees::{fit_ensemble, serialize_model, Dataset, EnsembleModel, EnsembleSpec, Task};
use comfort_service::{Service, Settings, Store};

pub const NEW_SUBJECT: &str = "S01";

pub struct Fixture {
    pub cohort: Cohort,
    /// Every subject's windows.
    pub matrix: FeatureMatrix,
    /// Training rows of the generic models; excludes [`NEW_SUBJECT`].
    pub generic: FeatureMatrix,
    pub classifier: EnsembleModel,
    pub regressor: EnsembleModel,
    pub regressor_bytes: Vec<u8>,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cohort = synthesize_cohort(&CohortSpec::standard(6, 600.0, 42)).unwrap();
        let matrix = cohort_matrix(&cohort, &WindowSpec::default()).unwrap();
        let generic = matrix.filter(|r| r.subject_id != NEW_SUBJECT);
        let fit = |task| {
            let spec = EnsembleSpec::extra_trees(task, 7).with_estimators(30);
            fit_ensemble(&Dataset::from_matrix(&generic, task), &spec).unwrap()
        };
        let classifier = fit(Task::Classify);
        let regressor = fit(Task::Regress);
        let regressor_bytes = serialize_model(&regressor);
        Fixture {
            cohort,
            matrix,
            generic,
            classifier,
            regressor,
            regressor_bytes,
        }
    })
}

pub fn settings(threshold: usize) -> Settings {
    Settings {
        threshold,
        n_estimators: Some(30),
        ..Settings::default()
    }
}

pub fn service(dir: &Path, threshold: usize) -> Arc<Service> {
    let f = fixture();
    Service::new(
        f.classifier.clone(),
        f.regressor.clone(),
        &f.regressor_bytes,
        f.generic.clone(),
        Store::open(dir).unwrap(),
        settings(threshold),
    )
    .unwrap()
}

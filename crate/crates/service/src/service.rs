//! Session, feedback and recalibration logic behind the HTTP layer.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use comfort_core::eval::calibrate_model;
use comfort_core::hrv::{registry_names, FeatureMatrix, FeatureRow};
use comfort_core::seed::{derive_seed, derive_seed_str};
use comfort_core::trees::{deserialize_model, serialize_model, CodecError, EnsembleModel, Task};
use comfort_core::{ConditionLabel, FilterPolicy, IbiSample};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::planner::{plan_actuation, ActuatorCatalog, ActuatorPlan, PlanError};
use crate::registry::{ModelRecord, Provenance, Registry};
use crate::session::{new_token, IngestAck, IngestRejection, Session};
use crate::store::{Store, StoreError};
use crate::FeedbackSample;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    SessionNotFound(String),
    #[error("unknown job {0}")]
    JobNotFound(String),
    #[error("insufficient data: {seconds_remaining:.1} s of beats still needed")]
    InsufficientData { seconds_remaining: f64 },
    #[error("batch rejected: {0}")]
    Rejected(#[from] IngestRejection),
    #[error("{0}")]
    InvalidInput(String),
    #[error("no feedback stored for subject {0}")]
    NoFeedback(String),
    #[error("recalibration {job_id} already running for this subject")]
    JobInFlight { job_id: String },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("model failure: {0}")]
    Model(String),
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: CodecError,
    },
    #[error("{path}: {message}")]
    Matrix { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

/// Runtime knobs, separated from file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub threshold: usize,
    pub seed: u64,
    pub n_estimators: Option<usize>,
    pub filter: FilterPolicy,
    pub seed_window_s: f64,
    pub catalog: ActuatorCatalog,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            threshold: 400,
            seed: 42,
            n_estimators: None,
            filter: FilterPolicy::default(),
            seed_window_s: 300.0,
            catalog: ActuatorCatalog::default_office(),
        }
    }
}

impl From<&ServiceConfig> for Settings {
    fn from(c: &ServiceConfig) -> Self {
        Self {
            threshold: c.recalibration.threshold,
            seed: c.recalibration.seed,
            n_estimators: c.recalibration.n_estimators,
            filter: c.filter,
            seed_window_s: c.seed_window_s,
            catalog: c.catalog.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfortPrediction {
    /// Raw regressor output on the 1..10 scale, not clamped.
    pub comfort: f64,
    pub class: ConditionLabel,
    pub class_probs: BTreeMap<ConditionLabel, f64>,
    pub model_version: u32,
    pub window_end_t: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    /// Samples stored for the subject after this submission.
    pub stored: usize,
    pub recalibration_triggered: bool,
    /// Set when the submission repeated the previous window and was dropped.
    pub duplicate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub job_id: String,
    pub subject_id: String,
    pub status: JobState,
    pub calibration_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Default)]
struct SubjectFeedback {
    samples: Vec<FeedbackSample>,
    /// Buffer length when the last recalibration was launched.
    launched_at: usize,
    in_flight: Option<String>,
}

pub struct Service {
    classifier: EnsembleModel,
    registry: Registry,
    /// Rows the generic models were trained on; never mutated.
    generic_matrix: FeatureMatrix,
    store: Store,
    settings: Settings,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    feedback: Mutex<HashMap<String, SubjectFeedback>>,
    jobs: Mutex<HashMap<String, JobInfo>>,
    job_done: Condvar,
}

fn read(path: &Path) -> Result<Vec<u8>, StartError> {
    std::fs::read(path).map_err(|source| StartError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_model(path: &Path) -> Result<(EnsembleModel, Vec<u8>), StartError> {
    let bytes = read(path)?;
    let model = deserialize_model(&bytes).map_err(|source| StartError::Codec {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((model, bytes))
}

impl Service {
    pub fn from_config(cfg: &ServiceConfig) -> Result<Arc<Self>, StartError> {
        cfg.validate()?;
        let (classifier, _) = load_model(&cfg.classifier_model)?;
        let (regressor, regressor_bytes) = load_model(&cfg.regressor_model)?;
        let text = read(&cfg.training_matrix)?;
        let matrix = FeatureMatrix::read_csv(text.as_slice()).map_err(|e| StartError::Matrix {
            path: cfg.training_matrix.clone(),
            message: e.to_string(),
        })?;
        let store = Store::open(&cfg.persistence_dir)?;
        Self::new(classifier, regressor, &regressor_bytes, matrix, store, Settings::from(cfg))
    }

    /// Build the service and restore persisted models and feedback.
    pub fn new(
        classifier: EnsembleModel,
        regressor: EnsembleModel,
        regressor_bytes: &[u8],
        generic_matrix: FeatureMatrix,
        store: Store,
        settings: Settings,
    ) -> Result<Arc<Self>, StartError> {
        let names = registry_names();
        if classifier.task() != Task::Classify || regressor.task() != Task::Regress {
            return Err(StartError::Incompatible(
                "classifier_model must classify and regressor_model must regress".into(),
            ));
        }
        for (what, cols) in [
            ("classifier", &classifier.feature_names),
            ("regressor", &regressor.feature_names),
            ("training matrix", &generic_matrix.feature_names),
        ] {
            if *cols != names {
                return Err(StartError::Incompatible(format!("{what} columns differ from the feature registry")));
            }
        }
        settings
            .catalog
            .validate()
            .map_err(|e| StartError::Incompatible(e.to_string()))?;
        let registry = Registry::new(regressor, regressor_bytes, settings.seed);
        let mut launched: HashMap<String, usize> = HashMap::new();
        for stored in store.load_models()? {
            launched.insert(stored.record.subject_id.clone(), stored.record.provenance.calibration_samples);
            registry.restore(stored.record, stored.model);
        }
        let mut feedback = HashMap::new();
        for (subject, samples) in store.load_feedback()? {
            let launched_at = launched.get(&subject).copied().unwrap_or(0).min(samples.len());
            feedback.insert(
                subject,
                SubjectFeedback {
                    samples,
                    launched_at,
                    in_flight: None,
                },
            );
        }
        Ok(Arc::new(Self {
            classifier,
            registry,
            generic_matrix,
            store,
            settings,
            sessions: RwLock::new(HashMap::new()),
            feedback: Mutex::new(feedback),
            jobs: Mutex::new(HashMap::new()),
            job_done: Condvar::new(),
        }))
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    /// Returns the session id and the model version it starts on.
    pub fn create_session(&self, subject_id: &str) -> Result<(String, u32), ServiceError> {
        if subject_id.is_empty() {
            return Err(ServiceError::InvalidInput("subject_id must not be empty".into()));
        }
        let version = self.registry.active(subject_id).version;
        let s = Session::new(
            subject_id.to_string(),
            version,
            self.settings.filter,
            self.settings.seed_window_s * 1000.0,
        );
        let id = s.session_id.clone();
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::new(Mutex::new(s)));
        Ok((id, version))
    }

    pub fn ingest(&self, session_id: &str, batch: &[IbiSample]) -> Result<IngestAck, ServiceError> {
        let s = self.session(session_id)?;
        let mut s = s.lock().expect("session lock");
        Ok(s.ingest(batch)?)
    }

    fn predict_features(&self, subject: &str, values: &[f64], window_end_t: i64) -> Result<ComfortPrediction, ServiceError> {
        let model = self.registry.active(subject);
        let comfort = model
            .model
            .predict(values)
            .map_err(|e| ServiceError::Model(e.to_string()))?
            .value()
            .ok_or_else(|| ServiceError::Model("regressor returned a class".into()))?;
        let (code, probabilities) = match self
            .classifier
            .predict(values)
            .map_err(|e| ServiceError::Model(e.to_string()))?
        {
            comfort_core::trees::Prediction::Class { code, probabilities } => (code, probabilities),
            comfort_core::trees::Prediction::Value(_) => {
                return Err(ServiceError::Model("classifier returned a value".into()))
            }
        };
        let label = |c: u32| ConditionLabel::from_code(c).ok_or_else(|| ServiceError::Model(format!("unknown class code {c}")));
        let mut class_probs = BTreeMap::new();
        for (&c, &p) in self.classifier.class_codes.iter().zip(&probabilities) {
            class_probs.insert(label(c)?, p);
        }
        Ok(ComfortPrediction {
            comfort,
            class: label(code)?,
            class_probs,
            model_version: model.version,
            window_end_t,
        })
    }

    pub fn predict(&self, session_id: &str) -> Result<ComfortPrediction, ServiceError> {
        let s = self.session(session_id)?;
        let (subject, features, end) = {
            let s = s.lock().expect("session lock");
            let (f, end) = s.features().ok_or(ServiceError::InsufficientData {
                seconds_remaining: s.seconds_remaining(),
            })?;
            (s.subject_id.clone(), f, end)
        };
        self.predict_features(&subject, &features.values, end)
    }

    pub fn plan(&self, session_id: &str, target: f64) -> Result<ActuatorPlan, ServiceError> {
        let p = self.predict(session_id)?;
        Ok(plan_actuation(p.comfort, target, &self.settings.catalog)?)
    }

    pub fn models(&self, subject_id: &str) -> Vec<ModelRecord> {
        self.registry.records(subject_id)
    }

    pub fn feedback_count(&self, subject_id: &str) -> usize {
        self.feedback
            .lock()
            .expect("feedback lock")
            .get(subject_id)
            .map_or(0, |f| f.samples.len())
    }

    pub fn submit_feedback(
        self: &Arc<Self>,
        session_id: &str,
        comfort: f64,
        temp_adjust: Option<i32>,
    ) -> Result<FeedbackAck, ServiceError> {
        if !(1.0..=10.0).contains(&comfort) {
            return Err(ServiceError::InvalidInput(format!("comfort {comfort} outside [1, 10]")));
        }
        let s = self.session(session_id)?;
        let mut s = s.lock().expect("session lock");
        let (features, end) = s.features().ok_or(ServiceError::InsufficientData {
            seconds_remaining: s.seconds_remaining(),
        })?;
        if s.last_feedback_t == Some(end) {
            return Ok(FeedbackAck {
                stored: self.feedback_count(&s.subject_id),
                recalibration_triggered: false,
                duplicate: true,
                job_id: None,
            });
        }
        let class = self.predict_features(&s.subject_id, &features.values, end)?.class;
        let sample = FeedbackSample {
            subject_id: s.subject_id.clone(),
            window_end_t: end,
            comfort,
            temp_adjust,
            condition: class,
            features: features.values.to_vec(),
        };
        let mut all = self.feedback.lock().expect("feedback lock");
        self.store.append_feedback(&sample)?;
        s.last_feedback_t = Some(end);
        let entry = all.entry(s.subject_id.clone()).or_default();
        entry.samples.push(sample);
        let stored = entry.samples.len();
        let due = stored - entry.launched_at >= self.settings.threshold && entry.in_flight.is_none();
        let job_id = due.then(|| self.launch(&s.subject_id, entry));
        Ok(FeedbackAck {
            stored,
            recalibration_triggered: job_id.is_some(),
            duplicate: false,
            job_id,
        })
    }

    /// Manual trigger; recalibrates on whatever feedback is stored.
    pub fn recalibrate(self: &Arc<Self>, subject_id: &str) -> Result<String, ServiceError> {
        let mut all = self.feedback.lock().expect("feedback lock");
        let entry = match all.get_mut(subject_id) {
            Some(e) if !e.samples.is_empty() => e,
            _ => return Err(ServiceError::NoFeedback(subject_id.to_string())),
        };
        if let Some(job_id) = &entry.in_flight {
            return Err(ServiceError::JobInFlight { job_id: job_id.clone() });
        }
        Ok(self.launch(subject_id, entry))
    }

    fn launch(self: &Arc<Self>, subject: &str, entry: &mut SubjectFeedback) -> String {
        let job_id = new_token();
        let samples = entry.samples.clone();
        entry.in_flight = Some(job_id.clone());
        entry.launched_at = samples.len();
        self.jobs.lock().expect("jobs lock").insert(
            job_id.clone(),
            JobInfo {
                job_id: job_id.clone(),
                subject_id: subject.to_string(),
                status: JobState::Running,
                calibration_samples: samples.len(),
                model_version: None,
                error: None,
            },
        );
        log::info!("recalibration {job_id} for {subject} on {} samples", samples.len());
        let svc = Arc::clone(self);
        let subject = subject.to_string();
        let id = job_id.clone();
        std::thread::spawn(move || {
            let result = svc.recalibrate_now(&subject, &samples);
            if let Err(e) = &result {
                log::error!("recalibration {id} for {subject} failed: {e}");
            }
            if let Some(f) = svc.feedback.lock().expect("feedback lock").get_mut(&subject) {
                f.in_flight = None;
            }
            let mut jobs = svc.jobs.lock().expect("jobs lock");
            if let Some(job) = jobs.get_mut(&id) {
                match result {
                    Ok(record) => {
                        job.status = JobState::Succeeded;
                        job.model_version = Some(record.model_version);
                    }
                    Err(e) => {
                        job.status = JobState::Failed;
                        job.error = Some(e.to_string());
                    }
                }
            }
            svc.job_done.notify_all();
        });
        job_id
    }

    /// Fit a calibrated regressor synchronously and make it active.
    pub fn recalibrate_now(&self, subject: &str, samples: &[FeedbackSample]) -> Result<ModelRecord, ServiceError> {
        let names = registry_names();
        let rows: Vec<FeatureRow> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.features.len() != names.len() {
                    return Err(ServiceError::Model(format!("feedback sample {i} has {} features", s.features.len())));
                }
                Ok(FeatureRow {
                    row_id: i as u64,
                    subject_id: subject.to_string(),
                    condition: s.condition,
                    comfort: s.comfort,
                    window_index: i,
                    values: s.features.clone(),
                })
            })
            .collect::<Result<_, _>>()?;
        let calibration = FeatureMatrix::from_rows(names, rows);
        let generic = self.generic_matrix.filter(|r| r.subject_id != subject);
        let version = self.registry.next_version(subject);
        let job_seed = derive_seed(derive_seed_str(self.settings.seed, subject), u64::from(version));
        let mut spec = self.registry.generic().model.spec.with_seed(derive_seed(job_seed, 0));
        if let Some(n) = self.settings.n_estimators {
            spec = spec.with_estimators(n);
        }
        let mut model = calibrate_model(&generic, &calibration, &spec, derive_seed(job_seed, 1))
            .map_err(|e| ServiceError::Model(e.to_string()))?;
        model.meta.model_version = version;
        let bytes = serialize_model(&model);
        let provenance = Provenance {
            generic_training_id: self.registry.generic_training_id().to_string(),
            calibration_samples: samples.len(),
            seed: job_seed,
        };
        let record = self.registry.publish(subject, model, &bytes, provenance, |record, retired| {
            self.store.save_model(record, &bytes)?;
            retired.iter().try_for_each(|r| self.store.save_record(r))
        })?;
        log::info!("{subject}: model v{} active", record.model_version);
        Ok(record)
    }

    pub fn job(&self, job_id: &str) -> Result<JobInfo, ServiceError> {
        self.jobs
            .lock()
            .expect("jobs lock")
            .get(job_id)
            .cloned()
            .ok_or_else(|| ServiceError::JobNotFound(job_id.to_string()))
    }

    /// Block until the job leaves `Running` or the timeout passes.
    pub fn wait_job(&self, job_id: &str, timeout: Duration) -> Result<JobInfo, ServiceError> {
        let deadline = Instant::now() + timeout;
        let mut jobs = self.jobs.lock().expect("jobs lock");
        loop {
            let job = jobs
                .get(job_id)
                .cloned()
                .ok_or_else(|| ServiceError::JobNotFound(job_id.to_string()))?;
            let now = Instant::now();
            if job.status != JobState::Running || now >= deadline {
                return Ok(job);
            }
            jobs = self.job_done.wait_timeout(jobs, deadline - now).expect("jobs lock").0;
        }
    }
}

//! Real-time comfort provision.
//!
//! Sessions stream interbeat intervals into a sliding HRV window, get comfort
//! predictions from the subject's active model, and return feedback that
//! recalibrates that model in the background. [`http::router`] exposes the
//! whole surface as JSON over HTTP.

pub mod config;
pub mod http;
pub mod planner;
pub mod registry;
pub mod service;
pub mod session;
pub mod store;

use comfort_core::ConditionLabel;
use serde::{Deserialize, Serialize};

pub use config::{ConfigError, RecalibrationConfig, ServiceConfig};
pub use planner::{plan_actuation, Actuator, ActuatorCatalog, ActuatorPlan, ActuatorSetting, PlanError};
pub use registry::{ModelRecord, ModelStatus, Provenance, Registry};
pub use service::{
    ComfortPrediction, FeedbackAck, JobInfo, JobState, Service, ServiceError, Settings, StartError,
};
pub use session::{IngestAck, IngestRejection, Session};
pub use store::{Store, StoreError};

/// One occupant report paired with the window it was given against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSample {
    pub subject_id: String,
    pub window_end_t: i64,
    pub comfort: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_adjust: Option<i32>,
    /// Condition predicted for the window when the report arrived.
    pub condition: ConditionLabel,
    pub features: Vec<f64>,
}

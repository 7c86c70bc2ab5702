//! Versioned comfort models per subject with atomic activation.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use comfort_core::trees::EnsembleModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelStatus {
    Active,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generic_training_id: String,
    pub calibration_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub subject_id: String,
    pub model_version: u32,
    pub status: ModelStatus,
    pub provenance: Provenance,
    pub model_size_bytes: usize,
    /// CRC32 footer of the `.tcm` bytes.
    pub model_crc32: String,
}

/// A model together with the version it is served under. Never mutated
/// after construction; replaced wholesale on activation.
#[derive(Debug)]
pub struct ActiveModel {
    pub version: u32,
    pub model: EnsembleModel,
}

pub const GENERIC_VERSION: u32 = 1;

struct SubjectModels {
    records: Vec<ModelRecord>,
    active: Arc<ActiveModel>,
}

pub struct Registry {
    generic: Arc<ActiveModel>,
    generic_record: ModelRecord,
    subjects: RwLock<HashMap<String, SubjectModels>>,
}

pub fn crc_hex(bytes: &[u8]) -> String {
    let n = bytes.len();
    if n < 4 {
        return String::new();
    }
    format!("{:08x}", u32::from_le_bytes([bytes[n - 4], bytes[n - 3], bytes[n - 2], bytes[n - 1]]))
}

impl Registry {
    pub fn new(generic: EnsembleModel, generic_bytes: &[u8], seed: u64) -> Self {
        let crc = crc_hex(generic_bytes);
        Self {
            generic: Arc::new(ActiveModel {
                version: GENERIC_VERSION,
                model: generic,
            }),
            generic_record: ModelRecord {
                subject_id: String::new(),
                model_version: GENERIC_VERSION,
                status: ModelStatus::Active,
                provenance: Provenance {
                    generic_training_id: crc.clone(),
                    calibration_samples: 0,
                    seed,
                },
                model_size_bytes: generic_bytes.len(),
                model_crc32: crc,
            },
            subjects: RwLock::new(HashMap::new()),
        }
    }

    pub fn generic_training_id(&self) -> &str {
        &self.generic_record.provenance.generic_training_id
    }

    pub fn generic(&self) -> Arc<ActiveModel> {
        self.generic.clone()
    }

    /// The model a new prediction for `subject` should use.
    pub fn active(&self, subject: &str) -> Arc<ActiveModel> {
        let guard = self.subjects.read().expect("registry lock");
        guard.get(subject).map_or_else(|| self.generic.clone(), |s| s.active.clone())
    }

    fn generic_for(&self, subject: &str, status: ModelStatus) -> ModelRecord {
        ModelRecord {
            subject_id: subject.to_string(),
            status,
            ..self.generic_record.clone()
        }
    }

    /// Version history for `subject`, oldest first; the generic model is
    /// version 1 of every subject.
    pub fn records(&self, subject: &str) -> Vec<ModelRecord> {
        let guard = self.subjects.read().expect("registry lock");
        match guard.get(subject) {
            None => vec![self.generic_for(subject, ModelStatus::Active)],
            Some(s) => {
                let mut out = vec![self.generic_for(subject, ModelStatus::Retired)];
                out.extend(s.records.iter().cloned());
                out
            }
        }
    }

    pub fn next_version(&self, subject: &str) -> u32 {
        let guard = self.subjects.read().expect("registry lock");
        guard
            .get(subject)
            .and_then(|s| s.records.last())
            .map_or(GENERIC_VERSION + 1, |r| r.model_version + 1)
    }

    /// Make `model` the active version for its subject. `persist` runs under
    /// the write lock before the swap, receiving the new record and the
    /// records it retires; a failure leaves the registry untouched.
    pub fn publish<E>(
        &self,
        subject: &str,
        model: EnsembleModel,
        bytes: &[u8],
        provenance: Provenance,
        persist: impl FnOnce(&ModelRecord, &[ModelRecord]) -> Result<(), E>,
    ) -> Result<ModelRecord, E> {
        let mut guard = self.subjects.write().expect("registry lock");
        let version = guard
            .get(subject)
            .and_then(|s| s.records.last())
            .map_or(GENERIC_VERSION + 1, |r| r.model_version + 1);
        let record = ModelRecord {
            subject_id: subject.to_string(),
            model_version: version,
            status: ModelStatus::Active,
            provenance,
            model_size_bytes: bytes.len(),
            model_crc32: crc_hex(bytes),
        };
        let retired: Vec<ModelRecord> = guard
            .get(subject)
            .map(|s| {
                s.records
                    .iter()
                    .filter(|r| r.status == ModelStatus::Active)
                    .map(|r| ModelRecord {
                        status: ModelStatus::Retired,
                        ..r.clone()
                    })
                    .collect()
            })
            .unwrap_or_default();
        persist(&record, &retired)?;
        let active = Arc::new(ActiveModel { version, model });
        let entry = guard.entry(subject.to_string()).or_insert_with(|| SubjectModels {
            records: Vec::new(),
            active: active.clone(),
        });
        for r in &mut entry.records {
            r.status = ModelStatus::Retired;
        }
        entry.records.push(record.clone());
        entry.active = active;
        Ok(record)
    }

    /// Restore a stored record; the highest version per subject ends up active.
    pub fn restore(&self, mut record: ModelRecord, model: EnsembleModel) {
        let mut guard = self.subjects.write().expect("registry lock");
        let version = record.model_version;
        record.status = ModelStatus::Active;
        let active = Arc::new(ActiveModel { version, model });
        let entry = guard.entry(record.subject_id.clone()).or_insert_with(|| SubjectModels {
            records: Vec::new(),
            active: active.clone(),
        });
        if entry.records.last().is_none_or(|r| r.model_version < version) {
            for r in &mut entry.records {
                r.status = ModelStatus::Retired;
            }
            entry.records.push(record);
            entry.active = active;
        } else {
            record.status = ModelStatus::Retired;
            entry.records.push(record);
            entry.records.sort_by_key(|r| r.model_version);
        }
    }
}

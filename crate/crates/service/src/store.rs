//! On-disk state: `models/<subject>/v<n>.tcm` with a `v<n>.json` record
//! beside it, and one append-only `feedback/<subject>.jsonl` per subject.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use comfort_core::trees::{deserialize_model, EnsembleModel};

use crate::registry::ModelRecord;
use crate::FeedbackSample;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// File-name safe form of a subject id; `[A-Za-z0-9_-]` pass through and
/// every other byte becomes `~xx`.
pub fn encode_subject(subject: &str) -> String {
    let mut out = String::with_capacity(subject.len());
    for b in subject.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("~{b:02x}"));
        }
    }
    if out.is_empty() {
        out.push('~');
    }
    out
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

pub struct StoredModel {
    pub record: ModelRecord,
    pub model: EnsembleModel,
    pub bytes: Vec<u8>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["models", "feedback"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io(&p))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn model_dir(&self, subject: &str) -> PathBuf {
        self.root.join("models").join(encode_subject(subject))
    }

    pub fn model_path(&self, subject: &str, version: u32) -> PathBuf {
        self.model_dir(subject).join(format!("v{version}.tcm"))
    }

    fn feedback_path(&self, subject: &str) -> PathBuf {
        self.root.join("feedback").join(format!("{}.jsonl", encode_subject(subject)))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(bytes).map_err(io(&tmp))?;
        f.sync_all().map_err(io(&tmp))?;
        fs::rename(&tmp, path).map_err(io(path))
    }

    pub fn save_model(&self, record: &ModelRecord, bytes: &[u8]) -> Result<(), StoreError> {
        let dir = self.model_dir(&record.subject_id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        Self::write_atomic(&self.model_path(&record.subject_id, record.model_version), bytes)?;
        self.save_record(record)
    }

    pub fn save_record(&self, record: &ModelRecord) -> Result<(), StoreError> {
        let path = self.model_dir(&record.subject_id).join(format!("v{}.json", record.model_version));
        let text = serde_json::to_vec_pretty(record).expect("record serializes");
        Self::write_atomic(&path, &text)
    }

    /// Every stored personal model, ordered by (subject, version).
    pub fn load_models(&self) -> Result<Vec<StoredModel>, StoreError> {
        let mut out = Vec::new();
        let models = self.root.join("models");
        let mut dirs: Vec<PathBuf> = fs::read_dir(&models)
            .map_err(io(&models))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let mut records: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(io(&dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            records.sort();
            for path in records {
                let text = fs::read(&path).map_err(io(&path))?;
                let record: ModelRecord = serde_json::from_slice(&text).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let tcm = self.model_path(&record.subject_id, record.model_version);
                let bytes = fs::read(&tcm).map_err(io(&tcm))?;
                let model = deserialize_model(&bytes).map_err(|e| StoreError::Corrupt {
                    path: tcm.clone(),
                    message: e.to_string(),
                })?;
                out.push(StoredModel { record, model, bytes });
            }
        }
        out.sort_by(|a, b| {
            (a.record.subject_id.as_str(), a.record.model_version)
                .cmp(&(b.record.subject_id.as_str(), b.record.model_version))
        });
        Ok(out)
    }

    pub fn append_feedback(&self, sample: &FeedbackSample) -> Result<(), StoreError> {
        let path = self.feedback_path(&sample.subject_id);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
        let mut line = serde_json::to_vec(sample).expect("sample serializes");
        line.push(b'\n');
        f.write_all(&line).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))
    }

    /// All stored feedback, grouped by subject in file order.
    pub fn load_feedback(&self) -> Result<Vec<(String, Vec<FeedbackSample>)>, StoreError> {
        let dir = self.root.join("feedback");
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for path in files {
            let f = File::open(&path).map_err(io(&path))?;
            let mut samples: Vec<FeedbackSample> = Vec::new();
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str(&line) {
                    Ok(s) => samples.push(s),
                    // a torn final line from a crash mid-append
                    Err(e) if e.is_eof() => log::warn!("{}: ignoring truncated line {}", path.display(), i + 1),
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            path: path.clone(),
                            message: format!("line {}: {e}", i + 1),
                        })
                    }
                }
            }
            if let Some(first) = samples.first() {
                out.push((first.subject_id.clone(), samples));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subject_encoding_is_injective_on_examples() {
        assert_eq!(encode_subject("S01"), "S01");
        assert_ne!(encode_subject("a/b"), encode_subject("a_b"));
        assert_eq!(encode_subject("../x"), "~2e~2e~2fx");
        assert_eq!(encode_subject(""), "~");
    }
}

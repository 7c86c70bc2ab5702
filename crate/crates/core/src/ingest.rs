//! Interbeat-interval datasets: types, delimited-text IO, artifact cleaning
//! and label joining.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Default seed window for the first HRV window, in milliseconds.
pub const SEED_WINDOW_MS: f64 = 300_000.0;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("no records")]
    NoRecords,
    #[error("row {row} (line {line}): {message}")]
    Malformed { row: u64, line: u64, message: String },
    #[error("row {row} (line {line}): timestamp {t_ms} ms does not increase past {prev_ms} ms")]
    NonMonotonic { row: u64, line: u64, t_ms: i64, prev_ms: i64 },
    #[error("row {row} (line {line}): unknown condition code {code:?}")]
    UnknownCondition { row: u64, line: u64, code: String },
    #[error("empty series")]
    EmptySeries,
    #[error("signal too corrupted: dropped {dropped} of {total} beats")]
    TooCorrupted { dropped: usize, total: usize },
    #[error("subject {subject_id}: no annotation at or before t={t_ms} ms")]
    NoAnnotation { subject_id: String, t_ms: i64 },
    #[error("invalid filter policy: {0}")]
    Policy(String),
    #[error("column mapping: {0}")]
    Mapping(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Experimental condition, the classification target. Codes are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionLabel {
    VeryHotCooler = 0,
    VeryHotNoCooler = 1,
    HotNoCooler = 2,
}

impl ConditionLabel {
    pub const ALL: [ConditionLabel; 3] = [
        ConditionLabel::VeryHotCooler,
        ConditionLabel::VeryHotNoCooler,
        ConditionLabel::HotNoCooler,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionLabel::VeryHotCooler => "VERY_HOT_COOLER",
            ConditionLabel::VeryHotNoCooler => "VERY_HOT_NO_COOLER",
            ConditionLabel::HotNoCooler => "HOT_NO_COOLER",
        }
    }
}

impl std::fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbiSample {
    /// Milliseconds from session start.
    pub t_ms: i64,
    pub ibi_ms: f64,
}

impl IbiSample {
    pub fn new(t_ms: i64, ibi_ms: f64) -> Self {
        Self { t_ms, ibi_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiSeries {
    pub subject_id: String,
    pub condition: ConditionLabel,
    pub samples: Vec<IbiSample>,
}

impl IbiSeries {
    pub fn ibis(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ibi_ms).collect()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.iter().map(|s| s.ibi_ms).sum()
    }
}

/// A visual-analog-scale self report. Values live on the 1..=10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortAnnotation {
    pub t_ms: i64,
    pub comfort: f64,
    pub sensation: f64,
    pub sweat: f64,
}

impl ComfortAnnotation {
    pub fn new(t_ms: i64, comfort: f64, sensation: f64, sweat: f64) -> Self {
        Self {
            t_ms,
            comfort: clamp_vas(comfort),
            sensation: clamp_vas(sensation),
            sweat: clamp_vas(sweat),
        }
    }
}

pub fn clamp_vas(v: f64) -> f64 {
    v.clamp(1.0, 10.0)
}

/// Time-ordered annotations of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub subject_id: String,
    pub annotations: Vec<ComfortAnnotation>,
}

/// A series whose beats each carry the most recent annotation.
///
/// `labels[i]` is `None` only for beats preceding the first annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub series: IbiSeries,
    pub labels: Vec<Option<ComfortAnnotation>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub min_ibi_ms: f64,
    pub max_ibi_ms: f64,
    /// Maximum relative deviation from the running median of retained beats.
    pub max_rel_jump: f64,
    pub median_window: usize,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_ibi_ms: 250.0,
            max_ibi_ms: 3000.0,
            max_rel_jump: 0.2,
            median_window: 11,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_ibi_ms < self.max_ibi_ms) {
            return Err(IngestError::Policy("min_ibi_ms must be below max_ibi_ms".into()));
        }
        if !(self.max_rel_jump > 0.0 && self.max_rel_jump < 1.0) {
            return Err(IngestError::Policy("max_rel_jump must lie in (0, 1)".into()));
        }
        if self.median_window == 0 {
            return Err(IngestError::Policy("median_window must be positive".into()));
        }
        Ok(())
    }
}

/// Online beat filter shared by batch cleaning and live sessions.
///
/// A beat is retained when it lies in the closed range
/// `[min_ibi_ms, max_ibi_ms]` and deviates from the median of the last
/// `median_window` retained beats by at most `max_rel_jump`.
#[derive(Debug, Clone)]
pub struct BeatFilter {
    policy: FilterPolicy,
    recent: VecDeque<f64>,
}

impl BeatFilter {
    pub fn new(policy: FilterPolicy) -> Self {
        Self {
            recent: VecDeque::with_capacity(policy.median_window),
            policy,
        }
    }

    pub fn policy(&self) -> &FilterPolicy {
        &self.policy
    }

    /// Decide one beat; retained beats enter the median history.
    pub fn admit(&mut self, ibi_ms: f64) -> bool {
        let p = &self.policy;
        if !ibi_ms.is_finite() || ibi_ms < p.min_ibi_ms || ibi_ms > p.max_ibi_ms {
            return false;
        }
        if !self.recent.is_empty() {
            let med = median(self.recent.iter().copied());
            if ((ibi_ms - med) / med).abs() > p.max_rel_jump {
                return false;
            }
        }
        if self.recent.len() == p.median_window {
            self.recent.pop_front();
        }
        self.recent.push_back(ibi_ms);
        true
    }
}

pub(crate) fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Drop out-of-range and ectopic-looking beats.
pub fn clean_ibi(series: &IbiSeries, policy: &FilterPolicy) -> Result<IbiSeries> {
    policy.validate()?;
    if series.samples.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    let mut filter = BeatFilter::new(*policy);
    let samples: Vec<IbiSample> = series
        .samples
        .iter()
        .copied()
        .filter(|s| filter.admit(s.ibi_ms))
        .collect();
    let dropped = series.samples.len() - samples.len();
    if dropped * 2 > series.samples.len() {
        return Err(IngestError::TooCorrupted {
            dropped,
            total: series.samples.len(),
        });
    }
    Ok(IbiSeries {
        subject_id: series.subject_id.clone(),
        condition: series.condition,
        samples,
    })
}

/// Attach to each beat the last annotation at or before its timestamp.
///
/// The first window end is the beat at which the cumulative IBI reaches
/// `seed_ms` (or the last beat when the series is shorter); it must be
/// covered by an annotation.
pub fn join_labels(
    series: &IbiSeries,
    track: &AnnotationTrack,
    seed_ms: f64,
) -> Result<LabeledSeries> {
    if series.samples.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    let mut acc = 0.0;
    let mut first_end = series.samples[series.samples.len() - 1].t_ms;
    for s in &series.samples {
        acc += s.ibi_ms;
        if acc >= seed_ms {
            first_end = s.t_ms;
            break;
        }
    }
    let anns = &track.annotations;
    if anns.first().map_or(true, |a| a.t_ms > first_end) {
        return Err(IngestError::NoAnnotation {
            subject_id: series.subject_id.clone(),
            t_ms: first_end,
        });
    }
    let mut labels = Vec::with_capacity(series.samples.len());
    let mut next = 0usize;
    let mut current = None;
    for s in &series.samples {
        while next < anns.len() && anns[next].t_ms <= s.t_ms {
            current = Some(anns[next]);
            next += 1;
        }
        labels.push(current);
    }
    Ok(LabeledSeries {
        series: series.clone(),
        labels,
    })
}

/// Join every series with its subject's track.
pub fn join_all(
    series: &[IbiSeries],
    tracks: &[AnnotationTrack],
    seed_ms: f64,
) -> Result<Vec<LabeledSeries>> {
    let by_subject: BTreeMap<&str, &AnnotationTrack> =
        tracks.iter().map(|t| (t.subject_id.as_str(), t)).collect();
    series
        .iter()
        .map(|s| {
            let empty = AnnotationTrack {
                subject_id: s.subject_id.clone(),
                annotations: Vec::new(),
            };
            let track = by_subject.get(s.subject_id.as_str()).copied().unwrap_or(&empty);
            join_labels(s, track, seed_ms)
        })
        .collect()
}

const IBI_HEADER: [&str; 4] = ["subject_id", "condition", "t_ms", "ibi_ms"];
const ANNOTATION_HEADER: [&str; 5] = ["subject_id", "t_ms", "comfort", "sensation", "sweat"];

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(IngestError::Malformed {
            row: 0,
            line: 1,
            message: format!("expected header {:?}, found {:?}", expected.join(","), header),
        });
    }
    Ok(())
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize, row: u64, line: u64) -> Result<&'r str> {
    rec.get(i).map(str::trim).ok_or_else(|| IngestError::Malformed {
        row,
        line,
        message: format!("expected {} fields, found {}", i + 1, rec.len()),
    })
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, row: u64, line: u64) -> Result<T> {
    s.parse().map_err(|_| IngestError::Malformed {
        row,
        line,
        message: format!("invalid {what} {s:?}"),
    })
}

fn reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

/// Read `subject_id,condition,t_ms,ibi_ms` rows into contiguous
/// (subject, condition) blocks.
pub fn read_ibi_csv(input: impl Read) -> Result<Vec<IbiSeries>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &IBI_HEADER)?;
    let mut out: Vec<IbiSeries> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 1;
        let line = rec.position().map_or(row + 1, |p| p.line());
        if rec.len() != IBI_HEADER.len() {
            return Err(IngestError::Malformed {
                row,
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let subject = field(&rec, 0, row, line)?;
        let code_str = field(&rec, 1, row, line)?;
        let condition = code_str
            .parse::<u32>()
            .ok()
            .and_then(ConditionLabel::from_code)
            .ok_or_else(|| IngestError::UnknownCondition {
                row,
                line,
                code: code_str.to_string(),
            })?;
        let t_ms: i64 = parse_num(field(&rec, 2, row, line)?, "t_ms", row, line)?;
        let ibi_ms: f64 = parse_num(field(&rec, 3, row, line)?, "ibi_ms", row, line)?;
        if !(ibi_ms.is_finite() && ibi_ms > 0.0) {
            return Err(IngestError::Malformed {
                row,
                line,
                message: format!("ibi_ms must be positive, found {ibi_ms}"),
            });
        }
        let sample = IbiSample { t_ms, ibi_ms };
        match out.last_mut() {
            Some(s) if s.subject_id == subject && s.condition == condition => {
                let prev = s.samples[s.samples.len() - 1].t_ms;
                if t_ms <= prev {
                    return Err(IngestError::NonMonotonic {
                        row,
                        line,
                        t_ms,
                        prev_ms: prev,
                    });
                }
                s.samples.push(sample);
            }
            _ => out.push(IbiSeries {
                subject_id: subject.to_string(),
                condition,
                samples: vec![sample],
            }),
        }
    }
    if out.is_empty() {
        return Err(IngestError::NoRecords);
    }
    Ok(out)
}

/// Read `subject_id,t_ms,comfort,sensation,sweat` rows, grouped per subject
/// in order of first appearance and sorted by time.
pub fn read_annotations_csv(input: impl Read) -> Result<Vec<AnnotationTrack>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &ANNOTATION_HEADER)?;
    let mut out: Vec<AnnotationTrack> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 1;
        let line = rec.position().map_or(row + 1, |p| p.line());
        if rec.len() != ANNOTATION_HEADER.len() {
            return Err(IngestError::Malformed {
                row,
                line,
                message: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let subject = field(&rec, 0, row, line)?;
        let t_ms: i64 = parse_num(field(&rec, 1, row, line)?, "t_ms", row, line)?;
        let mut vals = [0.0f64; 3];
        for (j, name) in ["comfort", "sensation", "sweat"].iter().enumerate() {
            vals[j] = parse_num(field(&rec, 2 + j, row, line)?, name, row, line)?;
            if !vals[j].is_finite() {
                return Err(IngestError::Malformed {
                    row,
                    line,
                    message: format!("{name} must be finite"),
                });
            }
        }
        let idx = *index.entry(subject.to_string()).or_insert_with(|| {
            out.push(AnnotationTrack {
                subject_id: subject.to_string(),
                annotations: Vec::new(),
            });
            out.len() - 1
        });
        out[idx]
            .annotations
            .push(ComfortAnnotation::new(t_ms, vals[0], vals[1], vals[2]));
    }
    if out.is_empty() {
        return Err(IngestError::NoRecords);
    }
    for track in &mut out {
        track.annotations.sort_by_key(|a| a.t_ms);
    }
    Ok(out)
}

pub fn write_ibi_csv(mut out: impl Write, series: &[IbiSeries]) -> Result<()> {
    writeln!(out, "{}", IBI_HEADER.join(","))?;
    for s in series {
        for b in &s.samples {
            writeln!(out, "{},{},{},{}", s.subject_id, s.condition.code(), b.t_ms, b.ibi_ms)?;
        }
    }
    Ok(())
}

pub fn write_annotations_csv(mut out: impl Write, tracks: &[AnnotationTrack]) -> Result<()> {
    writeln!(out, "{}", ANNOTATION_HEADER.join(","))?;
    for t in tracks {
        for a in &t.annotations {
            writeln!(
                out,
                "{},{},{},{},{}",
                t.subject_id, a.t_ms, a.comfort, a.sensation, a.sweat
            )?;
        }
    }
    Ok(())
}

/// Parsed dataset: IBI blocks plus per-subject annotation tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct IbiDataset {
    pub series: Vec<IbiSeries>,
    pub tracks: Vec<AnnotationTrack>,
}

impl IbiDataset {
    pub fn sample_count(&self) -> usize {
        self.series.iter().map(|s| s.samples.len()).sum()
    }
}

/// Load an IBI file and its companion annotations file.
pub fn parse_ibi_dataset(ibi_path: &Path, annotations_path: &Path) -> Result<IbiDataset> {
    let series = read_ibi_csv(File::open(ibi_path)?)?;
    let tracks = read_annotations_csv(File::open(annotations_path)?)?;
    Ok(IbiDataset { series, tracks })
}

/// Column mapping for third-party IBI exports.
///
/// Loaded from TOML; names the source columns feeding each field of the
/// native schema. `t_ms` may be omitted, in which case timestamps are the
/// running sum of intervals within each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub subject_id: String,
    pub condition: String,
    #[serde(default)]
    pub t_ms: Option<String>,
    pub ibi_ms: String,
    /// Multiplier taking the source time column to milliseconds.
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Multiplier taking the source interval column to milliseconds.
    #[serde(default = "one")]
    pub ibi_scale: f64,
    #[serde(default = "comma")]
    pub delimiter: char,
    /// Source condition value -> native condition code.
    pub condition_codes: BTreeMap<String, u32>,
    #[serde(default)]
    pub annotations: Option<AnnotationMapping>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMapping {
    pub subject_id: String,
    pub t_ms: String,
    pub comfort: String,
    pub sensation: String,
    pub sweat: String,
    #[serde(default = "one")]
    pub time_scale: f64,
}

fn one() -> f64 {
    1.0
}

fn comma() -> char {
    ','
}

impl ColumnMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ColumnMapping =
            toml::from_str(text).map_err(|e| IngestError::Mapping(e.to_string()))?;
        for code in m.condition_codes.values() {
            if ConditionLabel::from_code(*code).is_none() {
                return Err(IngestError::Mapping(format!("condition code {code} out of range")));
            }
        }
        if !m.delimiter.is_ascii() {
            return Err(IngestError::Mapping("delimiter must be ASCII".into()));
        }
        Ok(m)
    }

    fn csv_reader(&self, input: impl Read) -> csv::Reader<impl Read> {
        csv::ReaderBuilder::new()
            .has_headers(true)
            .delimiter(self.delimiter as u8)
            .from_reader(input)
    }

    /// Map a foreign IBI export onto native series.
    pub fn import_ibi(&self, input: impl Read) -> Result<Vec<IbiSeries>> {
        let mut rdr = self.csv_reader(input);
        let header = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::Mapping(format!("source column {name:?} not found")))
        };
        let c_subject = col(&self.subject_id)?;
        let c_condition = col(&self.condition)?;
        let c_ibi = col(&self.ibi_ms)?;
        let c_t = self.t_ms.as_deref().map(col).transpose()?;

        let mut native = Vec::new();
        writeln!(native, "{}", IBI_HEADER.join(","))?;
        let mut last_key: Option<(String, u32)> = None;
        let mut clock = 0.0f64;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i as u64 + 1;
            let line = rec.position().map_or(row + 1, |p| p.line());
            let subject = field(&rec, c_subject, row, line)?.to_string();
            let raw_cond = field(&rec, c_condition, row, line)?;
            let code = *self.condition_codes.get(raw_cond).ok_or_else(|| {
                IngestError::UnknownCondition {
                    row,
                    line,
                    code: raw_cond.to_string(),
                }
            })?;
            let ibi: f64 = parse_num(field(&rec, c_ibi, row, line)?, "ibi", row, line)?;
            let ibi_ms = ibi * self.ibi_scale;
            let key = (subject.clone(), code);
            if last_key.as_ref() != Some(&key) {
                clock = 0.0;
                last_key = Some(key);
            }
            let t_ms = match c_t {
                Some(c) => {
                    let t: f64 = parse_num(field(&rec, c, row, line)?, "time", row, line)?;
                    (t * self.time_scale).round() as i64
                }
                None => {
                    clock += ibi_ms;
                    clock.round() as i64
                }
            };
            writeln!(native, "{subject},{code},{t_ms},{ibi_ms}")?;
        }
        read_ibi_csv(native.as_slice())
    }

    /// Map a foreign annotation export, when the mapping names one.
    pub fn import_annotations(&self, input: impl Read) -> Result<Vec<AnnotationTrack>> {
        let m = self
            .annotations
            .as_ref()
            .ok_or_else(|| IngestError::Mapping("no [annotations] mapping".into()))?;
        let mut rdr = self.csv_reader(input);
        let header = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::Mapping(format!("source column {name:?} not found")))
        };
        let cols = [
            col(&m.subject_id)?,
            col(&m.t_ms)?,
            col(&m.comfort)?,
            col(&m.sensation)?,
            col(&m.sweat)?,
        ];
        let mut native = Vec::new();
        writeln!(native, "{}", ANNOTATION_HEADER.join(","))?;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i as u64 + 1;
            let line = rec.position().map_or(row + 1, |p| p.line());
            let t: f64 = parse_num(field(&rec, cols[1], row, line)?, "time", row, line)?;
            writeln!(
                native,
                "{},{},{},{},{}",
                field(&rec, cols[0], row, line)?,
                (t * m.time_scale).round() as i64,
                field(&rec, cols[2], row, line)?,
                field(&rec, cols[3], row, line)?,
                field(&rec, cols[4], row, line)?,
            )?;
        }
        read_annotations_csv(native.as_slice())
    }
}

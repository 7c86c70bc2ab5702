//! Reproducible synthetic multi-subject cohorts.
//!
//! Each beat is drawn as
//!
//! ```text
//! ibi(t) = base + gain * offset[c]
//!        + var[c] * (a_vlf sin(2π f_vlf t + φ0) + a_lf sin(2π f_lf t + φ1) + a_hf sin(2π f_resp t + φ2))
//!        + noise_scale * var[c] * σ * ε,   ε ~ N(0, 1)
//! ```
//!
//! where `c` is the condition. The condition terms (`offset`, `var`) are the
//! shared response: heart rate rises and beat-to-beat variability falls with
//! heat stress. The subject terms (`base`, `σ`, the amplitudes, the rates and
//! `gain`) come from the [`SubjectProfile`] and its [`IdiosyncrasyShift`], so
//! individual differences dominate absolute feature levels. Self reports are
//! issued every [`ANNOTATION_PERIOD_MS`] from the condition centre plus the
//! subject's `label_bias` plus noise.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{AnnotationTrack, ComfortAnnotation, ConditionLabel, IbiSample, IbiSeries};
use crate::seed::{derive_seed, rng};

pub const ANNOTATION_PERIOD_MS: i64 = 60_000;
pub const MIN_BLOCK_S: f64 = 360.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("block {index} lasts {duration_s} s; at least {MIN_BLOCK_S} s are needed for one 5-minute window")]
    BlockTooShort { index: usize, duration_s: f64 },
    #[error("{given} profiles supplied for {n_subjects} subjects")]
    ProfileCount { given: usize, n_subjects: usize },
    #[error("invalid profile {subject_id}: {reason}")]
    InvalidProfile { subject_id: String, reason: String },
    #[error("empty schedule")]
    EmptySchedule,
}

/// Shared per-condition response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionResponse {
    /// Added to the subject's base IBI (scaled by the subject's gain).
    pub ibi_offset_ms: f64,
    /// Multiplies every variability term.
    pub variability: f64,
    pub comfort: f64,
    pub sensation: f64,
    pub sweat: f64,
}

pub fn condition_response(c: ConditionLabel) -> ConditionResponse {
    match c {
        ConditionLabel::VeryHotCooler => ConditionResponse {
            ibi_offset_ms: -30.0,
            variability: 0.8,
            comfort: 5.5,
            sensation: 7.0,
            sweat: 5.0,
        },
        ConditionLabel::VeryHotNoCooler => ConditionResponse {
            ibi_offset_ms: -60.0,
            variability: 0.6,
            comfort: 3.0,
            sensation: 8.5,
            sweat: 7.5,
        },
        ConditionLabel::HotNoCooler => ConditionResponse {
            ibi_offset_ms: 0.0,
            variability: 1.0,
            comfort: 6.5,
            sensation: 6.0,
            sweat: 3.5,
        },
    }
}

/// Population-level generative defaults, shifted per subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDefaults {
    pub beat_noise_ms: f64,
    pub vlf_amplitude_ms: f64,
    pub lf_amplitude_ms: f64,
    pub hf_amplitude_ms: f64,
    pub vlf_rate_hz: f64,
    pub lf_rate_hz: f64,
    pub resp_rate_hz: f64,
    pub label_noise: f64,
}

impl Default for GeneratorDefaults {
    fn default() -> Self {
        Self {
            beat_noise_ms: 25.0,
            vlf_amplitude_ms: 10.0,
            lf_amplitude_ms: 20.0,
            hf_amplitude_ms: 15.0,
            vlf_rate_hz: 0.02,
            lf_rate_hz: 0.1,
            resp_rate_hz: 0.25,
            label_noise: 0.4,
        }
    }
}

/// Per-subject offsets on the generative parameters. Amplitude terms are
/// natural-log offsets; rates are additive in Hz.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdiosyncrasyShift {
    pub beat_noise: f64,
    pub lf_amplitude: f64,
    pub hf_amplitude: f64,
    pub lf_rate_hz: f64,
    pub resp_rate_hz: f64,
    pub condition_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub base_ibi_ms: f64,
    pub idiosyncrasy_shift: IdiosyncrasyShift,
    pub label_bias: f64,
    pub noise_scale: f64,
    pub rng_seed: u64,
}

impl SubjectProfile {
    /// The population-average subject.
    pub fn reference(subject_id: impl Into<String>, rng_seed: u64) -> Self {
        Self {
            subject_id: subject_id.into(),
            base_ibi_ms: 900.0,
            idiosyncrasy_shift: IdiosyncrasyShift::default(),
            label_bias: 0.0,
            noise_scale: 1.0,
            rng_seed,
        }
    }

    /// Draw a subject; `idiosyncrasy` in `[0, 1]` scales every individual
    /// difference (0 gives the reference subject with its own seed).
    pub fn sample(subject_id: impl Into<String>, rng_seed: u64, idiosyncrasy: f64) -> Self {
        let mut r = rng(derive_seed(rng_seed, u64::MAX));
        let k = idiosyncrasy.clamp(0.0, 1.0);
        let mut n = |sd: f64| -> f64 {
            let e: f64 = StandardNormal.sample(&mut r);
            e * sd
        };
        let shift = IdiosyncrasyShift {
            beat_noise: k * n(0.35),
            lf_amplitude: k * n(0.4),
            hf_amplitude: k * n(0.4),
            lf_rate_hz: k * n(0.012),
            resp_rate_hz: k * n(0.03),
            condition_gain: k * n(0.2),
        };
        let u: f64 = r.random::<f64>() * 2.0 - 1.0;
        let v: f64 = r.random::<f64>() * 2.0 - 1.0;
        Self {
            subject_id: subject_id.into(),
            base_ibi_ms: 900.0 + k * 250.0 * u,
            idiosyncrasy_shift: shift,
            label_bias: k * 2.5 * v,
            noise_scale: 1.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: &str| SynthError::InvalidProfile {
            subject_id: self.subject_id.clone(),
            reason: reason.to_string(),
        };
        if !(600.0..=1200.0).contains(&self.base_ibi_ms) {
            return Err(bad("base_ibi_ms outside [600, 1200]"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(bad("noise_scale must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_subjects: usize,
    /// Explicit profiles; drawn from `seed` when absent.
    pub profiles: Option<Vec<SubjectProfile>>,
    /// Condition blocks run back to back on each subject's timeline.
    pub schedule: Vec<(ConditionLabel, f64)>,
    pub seed: u64,
    /// Strength of individual differences for drawn profiles.
    pub idiosyncrasy: f64,
    pub defaults: GeneratorDefaults,
}

impl CohortSpec {
    /// All three conditions, `block_s` seconds each.
    pub fn standard(n_subjects: usize, block_s: f64, seed: u64) -> Self {
        Self {
            n_subjects,
            profiles: None,
            schedule: ConditionLabel::ALL.iter().map(|&c| (c, block_s)).collect(),
            seed,
            idiosyncrasy: 1.0,
            defaults: GeneratorDefaults::default(),
        }
    }

    /// The reference cohort: 12 subjects, 600 s per condition.
    pub fn reference(seed: u64) -> Self {
        Self::standard(12, 600.0, seed)
    }

    pub fn with_idiosyncrasy(mut self, k: f64) -> Self {
        self.idiosyncrasy = k;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub profiles: Vec<SubjectProfile>,
    pub series: Vec<IbiSeries>,
    pub tracks: Vec<AnnotationTrack>,
}

pub fn subject_name(index: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("S{:0width$}", index + 1)
}

pub fn synthesize_cohort(spec: &CohortSpec) -> Result<Cohort, SynthError> {
    if spec.n_subjects < 2 {
        return Err(SynthError::TooFewSubjects(spec.n_subjects));
    }
    if spec.schedule.is_empty() {
        return Err(SynthError::EmptySchedule);
    }
    for (index, &(_, duration_s)) in spec.schedule.iter().enumerate() {
        if !(duration_s >= MIN_BLOCK_S) {
            return Err(SynthError::BlockTooShort { index, duration_s });
        }
    }
    let profiles: Vec<SubjectProfile> = match &spec.profiles {
        Some(p) if p.len() != spec.n_subjects => {
            return Err(SynthError::ProfileCount {
                given: p.len(),
                n_subjects: spec.n_subjects,
            })
        }
        Some(p) => p.clone(),
        None => (0..spec.n_subjects)
            .map(|i| {
                SubjectProfile::sample(
                    subject_name(i, spec.n_subjects),
                    derive_seed(spec.seed, i as u64),
                    spec.idiosyncrasy,
                )
            })
            .collect(),
    };
    let mut series = Vec::new();
    let mut tracks = Vec::new();
    for p in &profiles {
        p.validate()?;
        let (s, t) = synthesize_subject(p, &spec.schedule, &spec.defaults);
        series.extend(s);
        tracks.push(t);
    }
    Ok(Cohort {
        profiles,
        series,
        tracks,
    })
}

/// One subject's timeline: one series per schedule block plus its reports.
pub fn synthesize_subject(
    p: &SubjectProfile,
    schedule: &[(ConditionLabel, f64)],
    d: &GeneratorDefaults,
) -> (Vec<IbiSeries>, AnnotationTrack) {
    let mut r = rng(p.rng_seed);
    let sh = &p.idiosyncrasy_shift;
    let phases: [f64; 3] = [r.random::<f64>() * TAU, r.random::<f64>() * TAU, r.random::<f64>() * TAU];
    let sigma = d.beat_noise_ms * sh.beat_noise.exp();
    let a_vlf = d.vlf_amplitude_ms;
    let a_lf = d.lf_amplitude_ms * sh.lf_amplitude.exp();
    let a_hf = d.hf_amplitude_ms * sh.hf_amplitude.exp();
    let f_vlf = d.vlf_rate_hz;
    let f_lf = (d.lf_rate_hz + sh.lf_rate_hz).clamp(0.05, 0.14);
    let f_resp = (d.resp_rate_hz + sh.resp_rate_hz).clamp(0.16, 0.38);
    let gain = sh.condition_gain.exp();
    let label_noise = Normal::new(0.0, (d.label_noise * p.noise_scale).max(0.0))
        .expect("finite label noise");

    let mut out = Vec::with_capacity(schedule.len());
    let mut annotations = Vec::new();
    let mut t_ms: i64 = 0;
    let mut block_start: i64 = 0;
    for &(condition, duration_s) in schedule {
        let resp = condition_response(condition);
        let block_end = block_start + (duration_s * 1000.0).round() as i64;

        let mut at = block_start;
        while at < block_end {
            let draw = |r: &mut rand_chacha::ChaCha8Rng| {
                if p.noise_scale > 0.0 {
                    label_noise.sample(r)
                } else {
                    0.0
                }
            };
            let comfort = resp.comfort + p.label_bias + draw(&mut r);
            let sensation = resp.sensation - 0.5 * p.label_bias + draw(&mut r);
            let sweat = resp.sweat + draw(&mut r);
            annotations.push(ComfortAnnotation::new(at, comfort, sensation, sweat));
            at += ANNOTATION_PERIOD_MS;
        }

        let mean = p.base_ibi_ms + gain * resp.ibi_offset_ms;
        let var = resp.variability;
        let mut samples = Vec::new();
        loop {
            let ts = t_ms as f64 / 1000.0;
            let osc = a_vlf * (TAU * f_vlf * ts + phases[0]).sin()
                + a_lf * (TAU * f_lf * ts + phases[1]).sin()
                + a_hf * (TAU * f_resp * ts + phases[2]).sin();
            let e: f64 = StandardNormal.sample(&mut r);
            let ibi = (mean + var * osc + p.noise_scale * var * sigma * e)
                .round()
                .clamp(300.0, 2000.0);
            let next = t_ms + ibi as i64;
            if next > block_end {
                break;
            }
            t_ms = next;
            samples.push(IbiSample::new(t_ms, ibi));
        }
        out.push(IbiSeries {
            subject_id: p.subject_id.clone(),
            condition,
            samples,
        });
        t_ms = block_end.max(t_ms);
        block_start = block_end;
    }
    (
        out,
        AnnotationTrack {
            subject_id: p.subject_id.clone(),
            annotations,
        },
    )
}

//! Heart rate variability features over a per-beat sliding window.
//!
//! The first window is the shortest beat prefix covering five minutes; each
//! later window appends one beat and drops the oldest, so the beat count is
//! frozen at the seed count (see [`WindowMode`]).

mod matrix;
mod poincare;
mod rolling;
pub mod spectral;
mod time_domain;
mod window;

pub use matrix::{extract_feature_matrix, FeatureMatrix, FeatureRow, MatrixError};
pub use poincare::{nonlinear, Poincare};
pub use rolling::RollingTimeDomain;
pub use spectral::{freq_domain, FrequencyDomain};
pub use time_domain::{time_domain, TimeDomain, TRI_BIN_MS};
pub use window::{make_windows, HrvWindow, WindowError, WindowMode, WindowSpec};

use crate::ingest::IbiSample;

/// Canonical feature registry, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureName {
    MeanNn,
    MedianNn,
    Sdnn,
    Rmssd,
    Sdsd,
    Pnn50,
    Pnn20,
    Cvnn,
    MeanHr,
    MinHr,
    MaxHr,
    StdHr,
    TriIndex,
    VlfPower,
    LfPower,
    HfPower,
    TotalPower,
    LfHf,
    LfNu,
    HfNu,
    VlfRel,
    LfRel,
    HfRel,
    Sd1,
    Sd2,
    Sd1Sd2,
}

pub const FEATURE_COUNT: usize = 26;

impl FeatureName {
    pub const ALL: [FeatureName; FEATURE_COUNT] = [
        FeatureName::MeanNn,
        FeatureName::MedianNn,
        FeatureName::Sdnn,
        FeatureName::Rmssd,
        FeatureName::Sdsd,
        FeatureName::Pnn50,
        FeatureName::Pnn20,
        FeatureName::Cvnn,
        FeatureName::MeanHr,
        FeatureName::MinHr,
        FeatureName::MaxHr,
        FeatureName::StdHr,
        FeatureName::TriIndex,
        FeatureName::VlfPower,
        FeatureName::LfPower,
        FeatureName::HfPower,
        FeatureName::TotalPower,
        FeatureName::LfHf,
        FeatureName::LfNu,
        FeatureName::HfNu,
        FeatureName::VlfRel,
        FeatureName::LfRel,
        FeatureName::HfRel,
        FeatureName::Sd1,
        FeatureName::Sd2,
        FeatureName::Sd1Sd2,
    ];

    pub fn as_str(self) -> &'static str {
        use FeatureName::*;
        match self {
            MeanNn => "MEAN_NN",
            MedianNn => "MEDIAN_NN",
            Sdnn => "SDNN",
            Rmssd => "RMSSD",
            Sdsd => "SDSD",
            Pnn50 => "PNN50",
            Pnn20 => "PNN20",
            Cvnn => "CVNN",
            MeanHr => "MEAN_HR",
            MinHr => "MIN_HR",
            MaxHr => "MAX_HR",
            StdHr => "STD_HR",
            TriIndex => "TRI_INDEX",
            VlfPower => "VLF_POWER",
            LfPower => "LF_POWER",
            HfPower => "HF_POWER",
            TotalPower => "TOTAL_POWER",
            LfHf => "LF_HF",
            LfNu => "LF_NU",
            HfNu => "HF_NU",
            VlfRel => "VLF_REL",
            LfRel => "LF_REL",
            HfRel => "HF_REL",
            Sd1 => "SD1",
            Sd2 => "SD2",
            Sd1Sd2 => "SD1_SD2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.as_str() == name)
    }
}

impl std::fmt::Display for FeatureName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn registry_names() -> Vec<String> {
    FeatureName::ALL.iter().map(|f| f.as_str().to_string()).collect()
}

/// One window's features in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    /// Set when the tachogram carried no spectral power.
    pub degenerate_spectrum: bool,
}

impl FeatureVector {
    pub fn get(&self, name: FeatureName) -> f64 {
        self.values[name.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureName, f64)> + '_ {
        FeatureName::ALL.iter().map(move |&f| (f, self.values[f.index()]))
    }

    pub fn assemble(t: &TimeDomain, f: &FrequencyDomain, p: &Poincare) -> Self {
        use FeatureName::*;
        let mut v = [0.0; FEATURE_COUNT];
        let mut put = |n: FeatureName, x: f64| v[n.index()] = x;
        put(MeanNn, t.mean_nn);
        put(MedianNn, t.median_nn);
        put(Sdnn, t.sdnn);
        put(Rmssd, t.rmssd);
        put(Sdsd, t.sdsd);
        put(Pnn50, t.pnn50);
        put(Pnn20, t.pnn20);
        put(Cvnn, t.cvnn);
        put(MeanHr, t.mean_hr);
        put(MinHr, t.min_hr);
        put(MaxHr, t.max_hr);
        put(StdHr, t.std_hr);
        put(TriIndex, t.tri_index);
        put(VlfPower, f.vlf);
        put(LfPower, f.lf);
        put(HfPower, f.hf);
        put(TotalPower, f.total);
        put(LfHf, f.lf_hf);
        put(LfNu, f.lf_nu);
        put(HfNu, f.hf_nu);
        put(VlfRel, f.vlf_rel);
        put(LfRel, f.lf_rel);
        put(HfRel, f.hf_rel);
        put(Sd1, p.sd1);
        put(Sd2, p.sd2);
        put(Sd1Sd2, p.sd1_sd2);
        Self {
            values: v,
            degenerate_spectrum: f.degenerate,
        }
    }
}

/// All registry features for one window of beats.
pub fn compute_features(beats: &[IbiSample]) -> FeatureVector {
    let ibis: Vec<f64> = beats.iter().map(|b| b.ibi_ms).collect();
    let t = time_domain(&ibis);
    let f = freq_domain(beats);
    let p = nonlinear(&ibis);
    FeatureVector::assemble(&t, &f, &p)
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Population variance.
pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub(crate) fn successive_diffs(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

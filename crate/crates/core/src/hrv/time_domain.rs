use std::collections::HashMap;

use super::{mean, successive_diffs, variance};
use crate::ingest::median;

/// Histogram bin width for the triangular index (1/128 s).
pub const TRI_BIN_MS: f64 = 7.8125;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimeDomain {
    pub mean_nn: f64,
    pub median_nn: f64,
    pub sdnn: f64,
    pub rmssd: f64,
    pub sdsd: f64,
    pub pnn50: f64,
    pub pnn20: f64,
    pub cvnn: f64,
    pub mean_hr: f64,
    pub min_hr: f64,
    pub max_hr: f64,
    pub std_hr: f64,
    pub tri_index: f64,
}

/// Time-domain statistics. Standard deviations are population-normalised;
/// pNNx counts strict exceedances over the `K - 1` successive differences.
pub fn time_domain(ibis: &[f64]) -> TimeDomain {
    if ibis.is_empty() {
        return TimeDomain::default();
    }
    let k = ibis.len();
    let mean_nn = mean(ibis);
    let sdnn = variance(ibis).sqrt();
    let diffs = successive_diffs(ibis);
    let (rmssd, sdsd, pnn50, pnn20) = if diffs.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let m = diffs.len() as f64;
        let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / m).sqrt();
        let count = |thr: f64| diffs.iter().filter(|d| d.abs() > thr).count() as f64;
        (rmssd, variance(&diffs).sqrt(), 100.0 * count(50.0) / m, 100.0 * count(20.0) / m)
    };
    let hr: Vec<f64> = ibis.iter().map(|x| 60_000.0 / x).collect();

    let mut bins: HashMap<i64, usize> = HashMap::new();
    for x in ibis {
        *bins.entry((x / TRI_BIN_MS).floor() as i64).or_default() += 1;
    }
    let peak = bins.values().copied().max().unwrap_or(1);

    TimeDomain {
        mean_nn,
        median_nn: median(ibis.iter().copied()),
        sdnn,
        rmssd,
        sdsd,
        pnn50,
        pnn20,
        cvnn: if mean_nn > 0.0 { sdnn / mean_nn } else { 0.0 },
        mean_hr: mean(&hr),
        min_hr: hr.iter().copied().fold(f64::INFINITY, f64::min),
        max_hr: hr.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std_hr: variance(&hr).sqrt(),
        tri_index: k as f64 / peak as f64,
    }
}

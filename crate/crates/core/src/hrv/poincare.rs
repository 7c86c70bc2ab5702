use super::{successive_diffs, variance};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Poincare {
    pub sd1: f64,
    pub sd2: f64,
    pub sd1_sd2: f64,
}

/// Poincaré descriptors: `SD1² = var(Δ)/2`, `SD2² = 2·SDNN² − SD1²`
/// (floored at zero).
pub fn nonlinear(ibis: &[f64]) -> Poincare {
    let sd1_sq = variance(&successive_diffs(ibis)) / 2.0;
    let sd2_sq = (2.0 * variance(ibis) - sd1_sq).max(0.0);
    let (sd1, sd2) = (sd1_sq.sqrt(), sd2_sq.sqrt());
    Poincare {
        sd1,
        sd2,
        sd1_sd2: if sd2 > 0.0 { sd1 / sd2 } else { 0.0 },
    }
}

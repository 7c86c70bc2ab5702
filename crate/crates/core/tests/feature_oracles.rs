//! Features against deliberately naive reference implementations.

mod oracles;

use comfort_core::hrv::{compute_features, FeatureName, FeatureVector};
use comfort_core::IbiSample;
use oracles::{close, random_window};

#[test]
fn time_domain_and_poincare_match_naive_reference_on_100_windows() {
    oracles::check_time_and_poincare(100).unwrap();
}

#[test]
fn band_powers_match_direct_dft_on_the_same_grid() {
    oracles::check_band_powers(100).unwrap();
}

#[test]
fn pure_sinusoids_land_in_their_bands() {
    let (lf, hf) = oracles::sinusoid_shares();
    assert!(lf >= 0.9, "0.1 Hz: LF share {lf}");
    assert!(hf >= 0.9, "0.25 Hz: HF share {hf}");
}

fn time_domain_of(fv: &FeatureVector) -> Vec<f64> {
    use FeatureName::*;
    [MeanNn, MedianNn, Sdnn, Rmssd, Sdsd, Pnn50, Pnn20, Cvnn, MeanHr, MinHr, MaxHr, StdHr, TriIndex]
        .iter()
        .map(|&n| fv.get(n))
        .collect()
}

#[test]
fn time_domain_is_translation_invariant() {
    for seed in 0..20 {
        let w = random_window(2000 + seed);
        let shifted: Vec<IbiSample> = w.iter().map(|b| IbiSample::new(b.t_ms + 987_654_321, b.ibi_ms)).collect();
        assert_eq!(time_domain_of(&compute_features(&w)), time_domain_of(&compute_features(&shifted)));
    }
}

#[test]
fn linear_features_scale_with_the_intervals() {
    use FeatureName::*;
    for (seed, c) in [(1u64, 0.5), (2, 1.7), (3, 3.0)] {
        let w = random_window(3000 + seed);
        let scaled: Vec<IbiSample> = w.iter().map(|b| IbiSample::new(b.t_ms, b.ibi_ms * c)).collect();
        let (a, b) = (compute_features(&w), compute_features(&scaled));
        for n in [MeanNn, Sdnn, Rmssd, Sdsd, Sd1, Sd2] {
            assert!(close(b.get(n), c * a.get(n), 1e-12), "{n} x{c}");
        }
    }
}

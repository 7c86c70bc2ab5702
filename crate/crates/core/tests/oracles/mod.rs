//! Deliberately naive reference implementations of the window features.

#![allow(dead_code)]

use std::f64::consts::{SQRT_2, TAU};

use comfort_core::hrv::spectral::{resample_tachogram, HF_BAND, LF_BAND, RESAMPLE_HZ, SEGMENT_S, VLF_BAND};
use comfort_core::hrv::{compute_features, FeatureName, TRI_BIN_MS};
use comfort_core::seed::rng;
use comfort_core::IbiSample;
use rand::Rng;

/// A window of 250..450 beats with drift, two oscillations and jitter.
pub fn random_window(seed: u64) -> Vec<IbiSample> {
    let mut r = rng(seed);
    let n = r.random_range(250..450);
    let base = r.random_range(650.0..1050.0);
    let (a1, f1) = (r.random_range(0.0..60.0), r.random_range(0.04..0.15));
    let (a2, f2) = (r.random_range(0.0..40.0), r.random_range(0.15..0.4));
    let jitter = r.random_range(1.0..30.0);
    let mut t = r.random_range(0.0..1e6);
    (0..n)
        .map(|_| {
            let s = t / 1000.0;
            let ibi = base + a1 * (TAU * f1 * s).sin() + a2 * (TAU * f2 * s).cos() + jitter * (r.random::<f64>() - 0.5);
            t += ibi;
            IbiSample::new(t.round() as i64, ibi)
        })
        .collect()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Population variance from all pairwise squared differences.
pub fn pairwise_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (a - b) * (a - b);
        }
    }
    s / (2.0 * n * n)
}

pub fn naive_time_and_poincare(x: &[f64]) -> Vec<(FeatureName, f64)> {
    use FeatureName::*;
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let sdnn = pairwise_var(x).sqrt();
    let d: Vec<f64> = (1..n).map(|i| x[i] - x[i - 1]).collect();
    let m = d.len() as f64;
    let rmssd = (d.iter().map(|v| v * v).sum::<f64>() / m).sqrt();
    let sdsd = pairwise_var(&d).sqrt();
    let pnn = |thr: f64| 100.0 * d.iter().filter(|v| v.abs() > thr).count() as f64 / m;
    let hr: Vec<f64> = x.iter().map(|v| 60.0 / (v / 1000.0)).collect();
    let mut hr_sorted = hr.clone();
    hr_sorted.sort_by(f64::total_cmp);
    // longest run of equal histogram bins in sorted order
    let bins: Vec<i64> = sorted.iter().map(|v| (v / TRI_BIN_MS).floor() as i64).collect();
    let mut peak = 0;
    let mut i = 0;
    while i < bins.len() {
        let j = bins[i..].iter().take_while(|&&b| b == bins[i]).count();
        peak = peak.max(j);
        i += j;
    }
    // SD1 from the lag-1 scatter rotated by 45 degrees
    let across: Vec<f64> = (1..n).map(|i| (x[i] - x[i - 1]) / SQRT_2).collect();
    let sd1 = pairwise_var(&across).sqrt();
    let sd2 = (2.0 * sdnn * sdnn - sd1 * sd1).max(0.0).sqrt();
    vec![
        (MeanNn, mean),
        (MedianNn, median),
        (Sdnn, sdnn),
        (Rmssd, rmssd),
        (Sdsd, sdsd),
        (Pnn50, pnn(50.0)),
        (Pnn20, pnn(20.0)),
        (Cvnn, sdnn / mean),
        (MeanHr, hr.iter().sum::<f64>() / n as f64),
        (MinHr, hr_sorted[0]),
        (MaxHr, hr_sorted[n - 1]),
        (StdHr, pairwise_var(&hr).sqrt()),
        (TriIndex, n as f64 / peak as f64),
        (Sd1, sd1),
        (Sd2, sd2),
        (Sd1Sd2, sd1 / sd2),
    ]
}

/// Band powers from a direct DFT of one Hann-windowed, detrended segment
/// per `SEGMENT_S`, half overlapping, averaged.
pub fn naive_bands(grid: &[f64]) -> (f64, f64, f64) {
    let nperseg = (SEGMENT_S * RESAMPLE_HZ) as usize;
    let seg = nperseg.min(grid.len());
    let mut starts = Vec::new();
    let mut s = 0;
    while s + seg <= grid.len() {
        starts.push(s);
        s += (seg / 2).max(1);
    }
    let w: Vec<f64> = (0..seg).map(|i| (std::f64::consts::PI * i as f64 / seg as f64).sin().powi(2)).collect();
    let wss: f64 = w.iter().map(|v| v * v).sum();
    let df = RESAMPLE_HZ / seg as f64;
    let mut psd = vec![0.0; seg / 2 + 1];
    for &s in &starts {
        let y = &grid[s..s + seg];
        // normal equations for the least-squares line
        let n = seg as f64;
        let (sx, sxx) = (0..seg).fold((0.0, 0.0), |(a, b), i| (a + i as f64, b + (i * i) as f64));
        let sy: f64 = y.iter().sum();
        let sxy: f64 = y.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icept = (sy - slope * sx) / n;
        let z: Vec<f64> = y.iter().enumerate().map(|(i, v)| (v - icept - slope * i as f64) * w[i]).collect();
        for (k, p) in psd.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in z.iter().enumerate() {
                let ang = TAU * (k * i % seg) as f64 / seg as f64;
                re += v * ang.cos();
                im -= v * ang.sin();
            }
            let one_sided = if k == 0 || (seg % 2 == 0 && k == seg / 2) { 1.0 } else { 2.0 };
            *p += one_sided * (re * re + im * im) / (RESAMPLE_HZ * wss);
        }
    }
    let band = |(lo, hi): (f64, f64)| -> f64 {
        psd.iter()
            .enumerate()
            .filter(|(k, _)| (lo..hi).contains(&(*k as f64 * df)))
            .map(|(_, p)| p * df / starts.len() as f64)
            .sum()
    };
    (band(VLF_BAND), band(LF_BAND), band(HF_BAND))
}

/// 360 beats around 1000 ms modulated at `freq_hz`.
pub fn sinusoid(freq_hz: f64) -> Vec<IbiSample> {
    let mut t = 0.0f64;
    (0..360)
        .map(|_| {
            let ibi = 1000.0 + 40.0 * (TAU * freq_hz * t / 1000.0).sin();
            t += ibi;
            IbiSample::new(t.round() as i64, ibi)
        })
        .collect()
}

/// Every time-domain and Poincare feature of `windows` random windows
/// within 1e-9 relative of the naive values.
pub fn check_time_and_poincare(windows: u64) -> Result<(), String> {
    for seed in 0..windows {
        let w = random_window(seed);
        let x: Vec<f64> = w.iter().map(|b| b.ibi_ms).collect();
        let fv = compute_features(&w);
        for (name, want) in naive_time_and_poincare(&x) {
            let got = fv.get(name);
            if !close(got, want, 1e-9) {
                return Err(format!("window {seed} {name}: {got} vs {want}"));
            }
        }
    }
    Ok(())
}

/// Band powers and their ratios within 1e-6 relative of a direct DFT.
pub fn check_band_powers(windows: u64) -> Result<(), String> {
    use FeatureName::*;
    for seed in 0..windows {
        let w = random_window(1000 + seed);
        let grid = resample_tachogram(&w, RESAMPLE_HZ);
        let (vlf, lf, hf) = naive_bands(&grid);
        let fv = compute_features(&w);
        let total = vlf + lf + hf;
        for (name, want) in [
            (VlfPower, vlf),
            (LfPower, lf),
            (HfPower, hf),
            (TotalPower, total),
            (LfHf, lf / hf),
            (LfNu, 100.0 * lf / (lf + hf)),
            (HfNu, 100.0 * hf / (lf + hf)),
            (VlfRel, vlf / total),
            (LfRel, lf / total),
            (HfRel, hf / total),
        ] {
            let got = fv.get(name);
            if !close(got, want, 1e-6) {
                return Err(format!("window {seed} {name}: {got} vs {want}"));
            }
        }
    }
    Ok(())
}

/// LF and HF shares of 0.1 Hz and 0.25 Hz tachograms.
pub fn sinusoid_shares() -> (f64, f64) {
    let lf = compute_features(&sinusoid(0.1));
    let hf = compute_features(&sinusoid(0.25));
    (
        lf.get(FeatureName::LfPower) / lf.get(FeatureName::TotalPower),
        hf.get(FeatureName::HfPower) / hf.get(FeatureName::TotalPower),
    )
}

//! Frequency-domain HRV: the tachogram is cubic-spline resampled onto a
//! uniform 4 Hz grid and its power spectral density estimated with Welch's
//! method (Hann taper, 256 s segments, 50% overlap, per-segment linear
//! detrend). Band powers are rectangle sums of the one-sided density over
//! half-open bands `[lo, hi)`.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::ingest::IbiSample;

pub const RESAMPLE_HZ: f64 = 4.0;
pub const SEGMENT_S: f64 = 256.0;
pub const VLF_BAND: (f64, f64) = (0.003, 0.04);
pub const LF_BAND: (f64, f64) = (0.04, 0.15);
pub const HF_BAND: (f64, f64) = (0.15, 0.4);

/// Below this total power the spectrum is treated as flat.
const DEGENERATE_POWER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrequencyDomain {
    pub vlf: f64,
    pub lf: f64,
    pub hf: f64,
    pub total: f64,
    pub lf_hf: f64,
    pub lf_nu: f64,
    pub hf_nu: f64,
    pub vlf_rel: f64,
    pub lf_rel: f64,
    pub hf_rel: f64,
    pub degenerate: bool,
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior knots.
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0;
                let b = 2.0 * (h0 + h1);
                let c = h1;
                let d = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn eval_segment(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// Evaluate at non-decreasing abscissae.
    pub fn eval_sorted(&self, ts: impl Iterator<Item = f64>) -> Vec<f64> {
        let n = self.x.len();
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        if n == 1 {
            return ts.map(|_| self.y[0]).collect();
        }
        let mut seg = 0;
        for t in ts {
            while seg + 2 < n && t > self.x[seg + 1] {
                seg += 1;
            }
            out.push(self.eval_segment(seg, t));
        }
        out
    }
}

/// Uniformly resampled tachogram from the first to the last beat.
pub fn resample_tachogram(beats: &[IbiSample], fs: f64) -> Vec<f64> {
    if beats.is_empty() {
        return Vec::new();
    }
    let t0 = beats[0].t_ms;
    let x: Vec<f64> = beats.iter().map(|b| (b.t_ms - t0) as f64 / 1000.0).collect();
    let y: Vec<f64> = beats.iter().map(|b| b.ibi_ms).collect();
    let span = x[x.len() - 1];
    let n = (span * fs).floor() as usize + 1;
    NaturalCubicSpline::new(&x, &y).eval_sorted((0..n).map(|i| i as f64 / fs))
}

/// Subtract the least-squares line.
pub fn detrend_linear(x: &mut [f64]) {
    let n = x.len();
    if n < 2 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let tm = (n - 1) as f64 / 2.0;
    let ym = x.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        sxy += dt * (v - ym);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    for (i, v) in x.iter_mut().enumerate() {
        *v -= ym + slope * (i as f64 - tm);
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub df: f64,
    /// One-sided density at `k * df`.
    pub density: Vec<f64>,
}

impl Psd {
    pub fn band_power(&self, (lo, hi): (f64, f64)) -> f64 {
        self.density
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * self.df;
                f >= lo && f < hi
            })
            .map(|(_, p)| p * self.df)
            .sum()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Segment boundaries used by [`welch`]: `(start, len)` pairs.
pub fn welch_segments(n: usize, nperseg: usize) -> Vec<(usize, usize)> {
    let seg = nperseg.min(n);
    if seg == 0 {
        return Vec::new();
    }
    let step = (seg / 2).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + seg <= n {
        out.push((start, seg));
        start += step;
    }
    out
}

/// Welch density estimate; segments shorter than `nperseg` collapse to one
/// segment spanning the whole signal.
pub fn welch(signal: &[f64], fs: f64, nperseg: usize) -> Psd {
    let segments = welch_segments(signal.len(), nperseg);
    let Some(&(_, seg)) = segments.first() else {
        return Psd { df: 0.0, density: Vec::new() };
    };
    let window = hann(seg);
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (fs * wss);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(seg));
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    for &(start, len) in &segments {
        let mut part = signal[start..start + len].to_vec();
        detrend_linear(&mut part);
        for (b, (x, w)) in buf.iter_mut().zip(part.iter().zip(&window)) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = buf[k].norm_sqr() * scale;
            if k != 0 && !(seg % 2 == 0 && k == seg / 2) {
                p *= 2.0;
            }
            *a += p;
        }
    }
    let count = segments.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    Psd {
        df: fs / seg as f64,
        density: acc,
    }
}

/// Band summary from a density estimate.
pub fn summarize_bands(psd: &Psd) -> FrequencyDomain {
    let vlf = psd.band_power(VLF_BAND);
    let lf = psd.band_power(LF_BAND);
    let hf = psd.band_power(HF_BAND);
    let total = vlf + lf + hf;
    if !(total > DEGENERATE_POWER) {
        return FrequencyDomain {
            degenerate: true,
            ..FrequencyDomain::default()
        };
    }
    let lf_hf_sum = lf + hf;
    FrequencyDomain {
        vlf,
        lf,
        hf,
        total,
        lf_hf: if hf > 0.0 { lf / hf } else { 0.0 },
        lf_nu: if lf_hf_sum > 0.0 { 100.0 * lf / lf_hf_sum } else { 0.0 },
        hf_nu: if lf_hf_sum > 0.0 { 100.0 * hf / lf_hf_sum } else { 0.0 },
        vlf_rel: vlf / total,
        lf_rel: lf / total,
        hf_rel: hf / total,
        degenerate: false,
    }
}

pub fn freq_domain(beats: &[IbiSample]) -> FrequencyDomain {
    let grid = resample_tachogram(beats, RESAMPLE_HZ);
    if grid.len() < 4 {
        return FrequencyDomain {
            degenerate: true,
            ..FrequencyDomain::default()
        };
    }
    let nperseg = (SEGMENT_S * RESAMPLE_HZ) as usize;
    summarize_bands(&welch(&grid, RESAMPLE_HZ, nperseg))
}

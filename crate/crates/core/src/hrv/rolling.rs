use std::collections::VecDeque;

/// Incremental time-domain statistics over a fixed-count beat window.
///
/// Holds shifted running sums, so each push/pop is O(1). Order statistics
/// (median, min/max, histogram) are not tracked.
#[derive(Debug, Clone)]
pub struct RollingTimeDomain {
    capacity: usize,
    ibis: VecDeque<f64>,
    origin: Option<(f64, f64)>,
    s1: f64,
    s2: f64,
    h1: f64,
    h2: f64,
    d1: f64,
    d2: f64,
    nn50: usize,
    nn20: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingSnapshot {
    pub mean_nn: f64,
    pub sdnn: f64,
    pub rmssd: f64,
    pub sdsd: f64,
    pub pnn50: f64,
    pub pnn20: f64,
    pub cvnn: f64,
    pub mean_hr: f64,
    pub std_hr: f64,
}

impl RollingTimeDomain {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self {
            capacity,
            ibis: VecDeque::with_capacity(capacity + 1),
            origin: None,
            s1: 0.0,
            s2: 0.0,
            h1: 0.0,
            h2: 0.0,
            d1: 0.0,
            d2: 0.0,
            nn50: 0,
            nn20: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ibis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ibis.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.ibis.len() == self.capacity
    }

    fn diff_stats(&mut self, d: f64, sign: f64, step: isize) {
        self.d1 += sign * d;
        self.d2 += sign * d * d;
        if d.abs() > 50.0 {
            self.nn50 = (self.nn50 as isize + step) as usize;
        }
        if d.abs() > 20.0 {
            self.nn20 = (self.nn20 as isize + step) as usize;
        }
    }

    /// Append a beat, evicting the oldest once the window is full.
    pub fn push(&mut self, ibi: f64) {
        let (x0, h0) = *self.origin.get_or_insert((ibi, 60_000.0 / ibi));
        if let Some(&last) = self.ibis.back() {
            self.diff_stats(ibi - last, 1.0, 1);
        }
        let (x, h) = (ibi - x0, 60_000.0 / ibi - h0);
        self.s1 += x;
        self.s2 += x * x;
        self.h1 += h;
        self.h2 += h * h;
        self.ibis.push_back(ibi);
        if self.ibis.len() > self.capacity {
            let old = self.ibis.pop_front().expect("non-empty");
            let next = self.ibis[0];
            self.diff_stats(next - old, -1.0, -1);
            let (x, h) = (old - x0, 60_000.0 / old - h0);
            self.s1 -= x;
            self.s2 -= x * x;
            self.h1 -= h;
            self.h2 -= h * h;
        }
    }

    pub fn snapshot(&self) -> RollingSnapshot {
        let n = self.ibis.len() as f64;
        let (x0, h0) = self.origin.unwrap_or((0.0, 0.0));
        let m = self.s1 / n;
        let sdnn = (self.s2 / n - m * m).max(0.0).sqrt();
        let mean_nn = x0 + m;
        let hm = self.h1 / n;
        let nd = n - 1.0;
        let (rmssd, sdsd, pnn50, pnn20) = if nd >= 1.0 {
            let dm = self.d1 / nd;
            (
                (self.d2 / nd).max(0.0).sqrt(),
                (self.d2 / nd - dm * dm).max(0.0).sqrt(),
                100.0 * self.nn50 as f64 / nd,
                100.0 * self.nn20 as f64 / nd,
            )
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        RollingSnapshot {
            mean_nn,
            sdnn,
            rmssd,
            sdsd,
            pnn50,
            pnn20,
            cvnn: if mean_nn > 0.0 { sdnn / mean_nn } else { 0.0 },
            mean_hr: h0 + hm,
            std_hr: (self.h2 / n - hm * hm).max(0.0).sqrt(),
        }
    }
}

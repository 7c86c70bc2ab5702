use serde::{Deserialize, Serialize};

use crate::ingest::IbiSample;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("insufficient data: series covers {have_ms} ms, need {need_ms} ms")]
    InsufficientData { have_ms: u64, need_ms: u64 },
    #[error("invalid window spec: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Beat count frozen at the seed window's count.
    #[default]
    FixedBeatCount,
    /// Each window is the shortest run of beats ending at the current beat
    /// that covers the seed duration.
    FixedDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub seed_duration_s: f64,
    pub stride_beats: usize,
    pub mode: WindowMode,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            seed_duration_s: 300.0,
            stride_beats: 1,
            mode: WindowMode::FixedBeatCount,
        }
    }
}

impl WindowSpec {
    pub fn seed_ms(&self) -> f64 {
        self.seed_duration_s * 1000.0
    }

    fn validate(&self) -> Result<(), WindowError> {
        if !(self.seed_duration_s > 0.0) {
            return Err(WindowError::InvalidSpec("seed_duration_s must be positive"));
        }
        if self.stride_beats == 0 {
            return Err(WindowError::InvalidSpec("stride_beats must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrvWindow<'a> {
    pub beats: &'a [IbiSample],
    pub window_index: usize,
    /// Offset of the window's last beat within the series.
    pub end_beat: usize,
    pub end_t_ms: i64,
}

/// Number of leading beats whose intervals first sum to `seed_ms`.
pub fn seed_beat_count(beats: &[IbiSample], seed_ms: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (i, b) in beats.iter().enumerate() {
        acc += b.ibi_ms;
        if acc >= seed_ms {
            return Some(i + 1);
        }
    }
    None
}

pub fn make_windows<'a>(
    beats: &'a [IbiSample],
    spec: &WindowSpec,
) -> Result<Vec<HrvWindow<'a>>, WindowError> {
    spec.validate()?;
    let seed_ms = spec.seed_ms();
    let k = seed_beat_count(beats, seed_ms).ok_or_else(|| WindowError::InsufficientData {
        have_ms: beats.iter().map(|b| b.ibi_ms).sum::<f64>() as u64,
        need_ms: seed_ms as u64,
    })?;
    let window = |index: usize, start: usize, end: usize| HrvWindow {
        beats: &beats[start..=end],
        window_index: index,
        end_beat: end,
        end_t_ms: beats[end].t_ms,
    };
    let ends = (k - 1..beats.len()).step_by(spec.stride_beats);
    Ok(match spec.mode {
        WindowMode::FixedBeatCount => ends
            .enumerate()
            .map(|(i, end)| window(i, end + 1 - k, end))
            .collect(),
        WindowMode::FixedDuration => {
            let mut out = Vec::new();
            for (i, end) in ends.enumerate() {
                let mut acc = 0.0;
                let mut start = end;
                loop {
                    acc += beats[start].ibi_ms;
                    if acc >= seed_ms || start == 0 {
                        break;
                    }
                    start -= 1;
                }
                out.push(window(i, start, end));
            }
            out
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beats(n: usize, ibi: f64) -> Vec<IbiSample> {
        (1..=n).map(|i| IbiSample::new((i as f64 * ibi) as i64, ibi)).collect()
    }

    #[test]
    fn six_minutes_give_61_windows() {
        let b = beats(360, 1000.0);
        let w = make_windows(&b, &WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 360 - 300 + 1);
        assert!(w.iter().all(|x| x.beats.len() == 300));
        assert_eq!(w[0].end_t_ms, 300_000);
        assert_eq!(w[60].end_t_ms, 360_000);
    }

    #[test]
    fn exactly_five_minutes_is_one_window() {
        let b = beats(300, 1000.0);
        assert_eq!(make_windows(&b, &WindowSpec::default()).unwrap().len(), 1);
    }

    #[test]
    fn short_series_is_insufficient() {
        let b = beats(299, 1000.0);
        let err = make_windows(&b, &WindowSpec::default()).unwrap_err();
        assert!(err.to_string().starts_with("insufficient data"));
    }

    #[test]
    fn fixed_duration_tracks_heart_rate() {
        let mut b = beats(300, 1000.0);
        let t = b[299].t_ms;
        b.extend((1..=100).map(|i| IbiSample::new(t + i * 500, 500.0)));
        let spec = WindowSpec {
            mode: WindowMode::FixedDuration,
            ..WindowSpec::default()
        };
        let w = make_windows(&b, &spec).unwrap();
        assert_eq!(w.len(), 101);
        // last window: 100 beats of 500 ms plus 250 of 1000 ms
        assert_eq!(w[100].beats.len(), 350);
        let fixed = make_windows(&b, &WindowSpec::default()).unwrap();
        assert_eq!(fixed[100].beats.len(), 300);
    }
}

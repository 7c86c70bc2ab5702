//! Live IBI sessions: online cleaning and the sliding seed window.

use std::collections::VecDeque;

use comfort_core::hrv::{compute_features, FeatureVector};
use comfort_core::ingest::BeatFilter;
use comfort_core::{FilterPolicy, IbiSample};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestRejection {
    #[error("sample {index}: t_ms {t_ms} does not follow {previous}")]
    NonMonotonic { index: usize, t_ms: i64, previous: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestAck {
    pub beats_accepted: usize,
    pub beats_rejected: usize,
    pub window_ready: bool,
    pub seconds_remaining: f64,
}

/// 128 random bits as 32 lowercase hex digits.
pub fn new_token() -> String {
    let a: u64 = rand::random();
    let b: u64 = rand::random();
    format!("{a:016x}{b:016x}")
}

#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: String,
    pub subject_id: String,
    /// Model version active for the subject when the session opened.
    pub model_version: u32,
    pub created_at_ms: u64,
    seed_ms: f64,
    filter: BeatFilter,
    beats: VecDeque<IbiSample>,
    accepted_ms: f64,
    last_t_ms: Option<i64>,
    /// Frozen once the accepted beats first cover the seed window.
    k: Option<usize>,
    /// Window end of the last stored feedback, for dedup.
    pub last_feedback_t: Option<i64>,
}

impl Session {
    pub fn new(subject_id: String, model_version: u32, policy: FilterPolicy, seed_ms: f64) -> Self {
        let created_at_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Self {
            session_id: new_token(),
            subject_id,
            model_version,
            created_at_ms,
            seed_ms,
            filter: BeatFilter::new(policy),
            beats: VecDeque::new(),
            accepted_ms: 0.0,
            last_t_ms: None,
            k: None,
            last_feedback_t: None,
        }
    }

    pub fn window_beats(&self) -> Option<usize> {
        self.k
    }

    pub fn is_ready(&self) -> bool {
        self.k.is_some()
    }

    pub fn seconds_remaining(&self) -> f64 {
        if self.is_ready() {
            0.0
        } else {
            ((self.seed_ms - self.accepted_ms) / 1000.0).max(0.0)
        }
    }

    /// Validate the whole batch first, so a rejected batch leaves no trace.
    pub fn ingest(&mut self, batch: &[IbiSample]) -> Result<IngestAck, IngestRejection> {
        let mut previous = self.last_t_ms;
        for (index, s) in batch.iter().enumerate() {
            if let Some(p) = previous {
                if s.t_ms <= p {
                    return Err(IngestRejection::NonMonotonic {
                        index,
                        t_ms: s.t_ms,
                        previous: p,
                    });
                }
            }
            previous = Some(s.t_ms);
        }
        let mut accepted = 0;
        for s in batch {
            self.last_t_ms = Some(s.t_ms);
            if !self.filter.admit(s.ibi_ms) {
                continue;
            }
            accepted += 1;
            self.beats.push_back(*s);
            match self.k {
                Some(k) => {
                    while self.beats.len() > 2 * k {
                        self.beats.pop_front();
                    }
                }
                None => {
                    self.accepted_ms += s.ibi_ms;
                    if self.accepted_ms >= self.seed_ms {
                        self.k = Some(self.beats.len());
                    }
                }
            }
        }
        Ok(IngestAck {
            beats_accepted: accepted,
            beats_rejected: batch.len() - accepted,
            window_ready: self.is_ready(),
            seconds_remaining: self.seconds_remaining(),
        })
    }

    /// The last K accepted beats.
    pub fn window(&self) -> Option<Vec<IbiSample>> {
        let k = self.k?;
        let start = self.beats.len() - k;
        Some(self.beats.range(start..).copied().collect())
    }

    /// Features of the current window and its end timestamp.
    pub fn features(&self) -> Option<(FeatureVector, i64)> {
        let w = self.window()?;
        let end = w.last().expect("window is non-empty").t_ms;
        Some((compute_features(&w), end))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> Session {
        Session::new("S01".into(), 1, FilterPolicy::default(), 300_000.0)
    }

    fn beats(n: usize, from: i64) -> Vec<IbiSample> {
        (0..n).map(|i| IbiSample::new(from + 1000 * i as i64, 1000.0)).collect()
    }

    #[test]
    fn ready_after_three_hundred_seconds() {
        let mut s = session();
        let ack = s.ingest(&beats(299, 1000)).unwrap();
        assert!(!ack.window_ready);
        assert_eq!(ack.seconds_remaining, 1.0);
        let ack = s.ingest(&beats(2, 300_000)).unwrap();
        assert!(ack.window_ready);
        assert_eq!(s.window_beats(), Some(300));
        assert_eq!(s.window().unwrap().len(), 300);
    }

    #[test]
    fn out_of_range_beat_is_rejected() {
        let mut s = session();
        let ack = s.ingest(&[IbiSample::new(0, 5000.0)]).unwrap();
        assert_eq!((ack.beats_accepted, ack.beats_rejected), (0, 1));
    }

    #[test]
    fn empty_batch_acks_zeros() {
        let ack = session().ingest(&[]).unwrap();
        assert_eq!((ack.beats_accepted, ack.beats_rejected, ack.window_ready), (0, 0, false));
    }

    #[test]
    fn non_monotonic_batch_is_rejected_whole() {
        let mut s = session();
        s.ingest(&beats(3, 0)).unwrap();
        let err = s.ingest(&[IbiSample::new(5000, 1000.0), IbiSample::new(1500, 1000.0)]);
        assert!(matches!(err, Err(IngestRejection::NonMonotonic { index: 1, .. })));
        // the valid first sample was not applied either
        assert!(s.ingest(&[IbiSample::new(3000, 1000.0)]).is_ok());
    }

    #[test]
    fn ring_buffer_keeps_two_windows() {
        let mut s = session();
        s.ingest(&beats(1000, 0)).unwrap();
        assert_eq!(s.beats.len(), 600);
        let w = s.window().unwrap();
        assert_eq!(w.last().unwrap().t_ms, 999_000);
        assert_eq!(w.first().unwrap().t_ms, 700_000);
    }

    #[test]
    fn tokens_are_128_bit_hex() {
        let a = new_token();
        assert_eq!(a.len(), 32);
        assert!(a.bytes().all(|b| b.is_ascii_hexdigit()));
        assert_ne!(a, new_token());
    }
}

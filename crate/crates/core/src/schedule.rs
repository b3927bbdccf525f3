use serde::{Deserialize, Serialize};

use crate::ids::{ModelId, UserId};
use crate::latency::{BatchLatency, LoadMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledBatch {
    pub model: ModelId,
    pub users: Vec<UserId>,
    /// Fraction of the band given to each user, aligned with `users`.
    pub shares: Vec<f64>,
    pub latency: BatchLatency,
}

/// An ordered batch sequence; batch `n` starts when batch `n - 1` ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: LoadMode,
    pub batches: Vec<ScheduledBatch>,
    pub served_count: usize,
}

impl Schedule {
    pub fn empty(mode: LoadMode) -> Self {
        Schedule {
            mode,
            batches: Vec::new(),
            served_count: 0,
        }
    }

    pub fn from_batches(mode: LoadMode, batches: Vec<ScheduledBatch>) -> Self {
        let served_count = batches.iter().map(|b| b.users.len()).sum();
        Schedule {
            mode,
            batches,
            served_count,
        }
    }

    pub fn total_latency_s(&self) -> f64 {
        self.batches.iter().map(|b| b.latency.total_s).sum()
    }

    /// Model of each maximal run of consecutive same-model batches.
    pub fn model_runs(&self) -> Vec<ModelId> {
        let mut runs: Vec<ModelId> = Vec::new();
        for b in &self.batches {
            if runs.last() != Some(&b.model) {
                runs.push(b.model);
            }
        }
        runs
    }

    pub fn served_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.batches.iter().flat_map(|b| b.users.iter().copied())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let s = Schedule::from_batches(
            LoadMode::Sharing,
            vec![
                ScheduledBatch {
                    model: ModelId(1),
                    users: vec![UserId(3), UserId(0)],
                    shares: vec![0.25, 0.75],
                    latency: BatchLatency::new(0.004, 0.01, 0.003),
                },
                ScheduledBatch {
                    model: ModelId(1),
                    users: vec![UserId(2)],
                    shares: vec![1.0],
                    latency: BatchLatency::new(0.001, 0.0, 0.002),
                },
            ],
        );
        assert_eq!(s.served_count, 3);
        assert_eq!(s.model_runs(), vec![ModelId(1)]);
        let back = Schedule::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}

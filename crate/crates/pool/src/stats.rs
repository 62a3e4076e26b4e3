use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};

const WINDOW: usize = 100_000;

/// Sliding window of latency samples in microseconds.
#[derive(Debug, Default)]
pub(crate) struct Latencies {
    samples: VecDeque<u64>,
    total: u64,
}

impl Latencies {
    pub fn record(&mut self, d: Duration) {
        if self.samples.len() == WINDOW {
            self.samples.pop_front();
        }
        self.samples.push_back(d.as_micros() as u64);
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Nearest-rank percentile, `q` in (0, 1].
    pub fn percentile(&self, q: f64) -> Option<u64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut v: Vec<u64> = self.samples.iter().copied().collect();
        v.sort_unstable();
        let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Some(v[rank - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub instances: usize,
    pub in_episode: usize,
    pub max_instances: usize,
    /// Resident set size of the serving process, when the platform reports it.
    pub memory_bytes: Option<u64>,
    pub steps_total: u64,
    pub step_p50_us: Option<u64>,
    pub step_p99_us: Option<u64>,
    pub creates_total: u64,
    pub create_p50_us: Option<u64>,
    pub create_p99_us: Option<u64>,
}

/// Current resident set size, read from `/proc/self/status`.
pub fn resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

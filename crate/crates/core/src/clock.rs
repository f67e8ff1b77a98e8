//! Time sources for run manifests and traces.
//!
//! All timestamps in persisted artifacts flow through [`Clock`] so that
//! offline runs can be made byte-for-byte reproducible by swapping in a
//! [`LogicalClock`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

/// Source of millisecond timestamps.
pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch (or since a logical origin).
    fn now_ms(&self) -> u64;
}

/// Wall-clock time.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock: the k-th call returns `origin + k * step_ms`.
///
/// With a single worker this makes every persisted timestamp a pure function
/// of call order, which is what the reproducibility tests rely on.
#[derive(Debug)]
pub struct LogicalClock {
    origin: u64,
    step_ms: u64,
    ticks: AtomicU64,
}

impl LogicalClock {
    pub fn new(origin: u64, step_ms: u64) -> Self {
        Self {
            origin,
            step_ms,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(0, 1_000)
    }
}

impl Clock for LogicalClock {
    fn now_ms(&self) -> u64 {
        let tick = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.origin + tick * self.step_ms
    }
}

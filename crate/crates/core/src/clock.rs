//! Monotonic time sources with sleep-until semantics.
//!
//! The simulated camera paces itself against a [`Clock`]. Production runs use
//! [`MonotonicClock`]; tests inject a [`VirtualClock`] so timing properties
//! run fast and deterministically.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Nanoseconds since the clock's epoch.
    fn now_ns(&self) -> u64;

    /// Blocks until `now_ns() >= deadline_ns`.
    fn sleep_until(&self, deadline_ns: u64);

    /// Charges `ns` of work to the clock. Wall clocks ignore this, since the
    /// work already took real time.
    fn advance(&self, _ns: u64) {}
}

#[derive(Debug, Clone)]
pub struct MonotonicClock {
    epoch: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { epoch: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn sleep_until(&self, deadline_ns: u64) {
        loop {
            let now = self.now_ns();
            if now >= deadline_ns {
                return;
            }
            let remaining = deadline_ns - now;
            // Coarse sleep, then spin for the last stretch.
            if remaining > 200_000 {
                std::thread::sleep(Duration::from_nanos(remaining - 100_000));
            } else {
                std::hint::spin_loop();
            }
        }
    }
}

/// Clock whose time only moves when someone sleeps on it or advances it.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for VirtualClock {
    fn now_ns(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline_ns: u64) {
        self.now.fetch_max(deadline_ns, Ordering::SeqCst);
    }

    fn advance(&self, ns: u64) {
        self.now.fetch_add(ns, Ordering::SeqCst);
    }
}

pub fn ms_to_ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

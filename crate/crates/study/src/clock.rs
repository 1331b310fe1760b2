//! Time sources.
//!
//! Reading times come only from the monotonic reading, in whole microseconds,
//! so a wall-clock jump mid-session cannot change them.

use std::fmt;
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync + fmt::Debug {
    /// Microseconds on a timeline that never goes backwards.
    fn monotonic_us(&self) -> u64;
    /// Milliseconds since the Unix epoch; may jump.
    fn wall_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
    offset_us: u64,
}

impl SystemClock {
    pub fn new() -> Self {
        Self::resume_from(0)
    }

    /// Continue a monotonic timeline persisted by an earlier process.
    pub fn resume_from(offset_us: u64) -> Self {
        SystemClock {
            origin: Instant::now(),
            offset_us,
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn monotonic_us(&self) -> u64 {
        self.offset_us + self.origin.elapsed().as_micros() as u64
    }

    fn wall_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Clock driven by hand, for tests and simulation.
#[derive(Debug, Default)]
pub struct ManualClock {
    inner: Mutex<(u64, u64)>,
}

impl ManualClock {
    pub fn new(monotonic_us: u64, wall_ms: u64) -> Self {
        ManualClock {
            inner: Mutex::new((monotonic_us, wall_ms)),
        }
    }

    /// Move both readings forward by `seconds` (rounded to microseconds).
    pub fn advance(&self, seconds: f64) {
        let us = secs_to_us(seconds);
        let mut g = self.inner.lock().unwrap();
        g.0 += us;
        g.1 += us / 1000;
    }

    /// Set the wall clock only; the monotonic reading is untouched.
    pub fn set_wall(&self, wall_ms: u64) {
        self.inner.lock().unwrap().1 = wall_ms;
    }
}

impl Clock for ManualClock {
    fn monotonic_us(&self) -> u64 {
        self.inner.lock().unwrap().0
    }

    fn wall_ms(&self) -> u64 {
        self.inner.lock().unwrap().1
    }
}

pub fn secs_to_us(seconds: f64) -> u64 {
    assert!(
        seconds.is_finite() && seconds >= 0.0,
        "bad duration {seconds}"
    );
    (seconds * 1e6).round() as u64
}

pub fn us_to_secs(us: u64) -> f64 {
    us as f64 / 1e6
}

use std::fmt::Debug;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Time source for call supervision.
///
/// The simulated clock advances only when something sleeps on it, which lets
/// the full-length timeout contract be exercised without waiting minutes.
pub trait Clock: Send + Sync + Debug {
    /// Seconds since an arbitrary fixed origin.
    fn now(&self) -> f64;
    fn sleep(&self, secs: f64);
    fn is_simulated(&self) -> bool {
        false
    }
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

#[derive(Debug, Default)]
pub struct SimulatedClock {
    now: Mutex<f64>,
}

impl SimulatedClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, secs: f64) {
        let mut now = self.now.lock().unwrap_or_else(|p| p.into_inner());
        *now += secs.max(0.0);
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> f64 {
        *self.now.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn sleep(&self, secs: f64) {
        self.advance(secs);
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

//! Sleeping with sub-millisecond fidelity.

use std::thread;
use std::time::{Duration, Instant};

/// Below this, parking overshoots by more than the request itself.
pub const SPIN_BELOW: Duration = Duration::from_micros(100);

/// Blocks the calling thread for at least `d`. Short waits yield in a loop;
/// longer ones park with a timeout and spin out the last stretch.
pub fn precise_sleep(d: Duration) {
    let deadline = Instant::now() + d;
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN_BELOW {
            thread::park_timeout(left - SPIN_BELOW);
        } else {
            thread::yield_now();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_returns_early() {
        for us in [0, 5, 50, 99, 150, 1200] {
            let d = Duration::from_micros(us);
            let t = Instant::now();
            precise_sleep(d);
            assert!(t.elapsed() >= d);
        }
    }

    #[test]
    fn short_sleeps_stay_short() {
        let t = Instant::now();
        for _ in 0..100 {
            precise_sleep(Duration::from_micros(10));
        }
        // 1 ms requested in total; generous bound for loaded machines.
        assert!(t.elapsed() < Duration::from_millis(50));
    }
}

//! Multiply-add accounting.
//!
//! The counter is thread-local so that concurrently running computations
//! (and test threads) never see each other's work. Only forward evaluation is
//! counted; adjoint computations are not.

use std::cell::Cell;

thread_local! {
    static COUNT: Cell<u64> = const { Cell::new(0) };
    static ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Adds `n` multiply-adds to the current thread's counter if counting is on.
#[inline]
pub fn add(n: u64) {
    ENABLED.with(|e| {
        if e.get() {
            COUNT.with(|c| c.set(c.get() + n));
        }
    });
}

/// Handle over the thread-local counter.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlopCounter;

impl FlopCounter {
    pub fn count(&self) -> u64 {
        COUNT.with(|c| c.get())
    }

    pub fn reset(&self) {
        COUNT.with(|c| c.set(0));
    }

    pub fn enabled(&self) -> bool {
        ENABLED.with(|e| e.get())
    }

    pub fn set_enabled(&self, on: bool) {
        ENABLED.with(|e| e.set(on));
    }

    /// Runs `f` and returns its result with the multiply-adds it performed.
    /// The running total is left incremented.
    pub fn measure<R>(&self, f: impl FnOnce() -> R) -> (R, u64) {
        let before = self.count();
        let r = f();
        (r, self.count() - before)
    }
}

//! Per-thread operation counters.
//!
//! Calibration claims to need forward passes only; these counters let tests
//! and reports assert that claim instead of trusting it. Counters are
//! thread-local so concurrent work elsewhere in the process cannot leak
//! into a caller's before/after delta.

use std::cell::Cell;

thread_local! {
    static FORWARD: Cell<u64> = const { Cell::new(0) };
    static BACKWARD: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record_forward() {
    FORWARD.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_backward() {
    BACKWARD.with(|c| c.set(c.get() + 1));
}

/// Total model forward passes performed by this thread.
pub fn forward_passes() -> u64 {
    FORWARD.with(|c| c.get())
}

/// Total gradient-tape backward passes performed by this thread.
pub fn backward_passes() -> u64 {
    BACKWARD.with(|c| c.get())
}

//! Allocation accounting for tensor payloads.
//!
//! Every [`Tensor`](super::Tensor) reports its payload bytes on creation and
//! drop. [`alloc_scope`] opens a measurement frame on the current thread;
//! frames nest, and each one sees every event that happens while it is open.
//! Only payload bytes are counted, so the numbers are platform independent.

use std::cell::RefCell;

/// Counters observed inside one measurement scope.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AllocStats {
    /// Net bytes allocated inside the scope and still alive. Negative when
    /// the scope freed tensors that were created before it opened.
    pub live_bytes: i64,
    /// Highest value `live_bytes` reached.
    pub peak_bytes: u64,
    pub alloc_events: u64,
}

impl AllocStats {
    /// Combine stats from scopes that ran concurrently on different threads.
    /// Peaks add, which is an upper bound on the true joint peak.
    pub fn merge(&self, other: &AllocStats) -> AllocStats {
        AllocStats {
            live_bytes: self.live_bytes + other.live_bytes,
            peak_bytes: self.peak_bytes + other.peak_bytes,
            alloc_events: self.alloc_events + other.alloc_events,
        }
    }
}

#[derive(Default)]
struct Frame {
    live: i64,
    peak: i64,
    events: u64,
}

thread_local! {
    static FRAMES: RefCell<Vec<Frame>> = const { RefCell::new(Vec::new()) };
}

pub(crate) fn record_alloc(bytes: usize) {
    if bytes == 0 {
        return;
    }
    FRAMES.with(|frames| {
        for f in frames.borrow_mut().iter_mut() {
            f.live += bytes as i64;
            f.peak = f.peak.max(f.live);
            f.events += 1;
        }
    });
}

pub(crate) fn record_free(bytes: usize) {
    if bytes == 0 {
        return;
    }
    FRAMES.with(|frames| {
        for f in frames.borrow_mut().iter_mut() {
            f.live -= bytes as i64;
        }
    });
}

/// Snapshot of the innermost open scope, if any.
pub fn current() -> Option<AllocStats> {
    FRAMES.with(|frames| {
        frames.borrow().last().map(|f| AllocStats {
            live_bytes: f.live,
            peak_bytes: f.peak.max(0) as u64,
            alloc_events: f.events,
        })
    })
}

struct FrameGuard;

impl Drop for FrameGuard {
    fn drop(&mut self) {
        FRAMES.with(|frames| {
            frames.borrow_mut().pop();
        });
    }
}

/// Run `f` and report the tensor allocations it made on this thread.
pub fn alloc_scope<R>(f: impl FnOnce() -> R) -> (R, AllocStats) {
    FRAMES.with(|frames| frames.borrow_mut().push(Frame::default()));
    let guard = FrameGuard;
    let out = f();
    let stats = current().expect("scope frame is open");
    drop(guard);
    (out, stats)
}

//! Event storage.
//!
//! [`SharedCalendarQueue`] is the single pool every optimistic worker fetches
//! from; [`ObjectCalendar`] is the per-object calendar of the conservative
//! engine.

pub mod calendar;
pub mod shared;
pub mod spinlock;

pub use calendar::ObjectCalendar;
pub use shared::{EventHandle, Invalidation, SharedCalendarQueue};
pub use spinlock::SpinLock;

use crate::time::VirtualTime;

/// `floor(ts / width)`, corrected so that bucket `k` is exactly the set of
/// timestamps with `k * width <= ts < (k + 1) * width` under floating-point
/// evaluation of the products.
#[inline]
pub fn bucket_index(ts: VirtualTime, width: f64) -> u64 {
    let t = ts.as_f64();
    let mut k = (t / width).floor();
    if k * width > t {
        k -= 1.0;
    } else if (k + 1.0) * width <= t {
        k += 1.0;
    }
    if k <= 0.0 {
        0
    } else if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

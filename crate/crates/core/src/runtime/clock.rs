use std::sync::atomic::{AtomicI64, Ordering};
use std::time::{Duration, Instant};

use crate::time::TimeValue;

/// Physical time since program start, either from the host's monotonic
/// clock or from a virtual clock that only moves when told to.
#[derive(Debug)]
pub enum PhysicalClock {
    Monotonic(Instant),
    Virtual(AtomicI64),
}

impl PhysicalClock {
    pub fn monotonic() -> Self {
        PhysicalClock::Monotonic(Instant::now())
    }

    pub fn virtual_at(start: TimeValue) -> Self {
        PhysicalClock::Virtual(AtomicI64::new(start.as_nanos()))
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, PhysicalClock::Virtual(_))
    }

    pub fn read(&self) -> TimeValue {
        match self {
            PhysicalClock::Monotonic(start) => {
                TimeValue::from_nanos(i64::try_from(start.elapsed().as_nanos()).unwrap_or(i64::MAX))
            }
            PhysicalClock::Virtual(ns) => TimeValue::from_nanos(ns.load(Ordering::SeqCst)),
        }
    }

    /// Moves a virtual clock forward to `t`; never backwards. No effect on a
    /// monotonic clock.
    pub fn advance_to(&self, t: TimeValue) {
        if let PhysicalClock::Virtual(ns) = self {
            ns.fetch_max(t.as_nanos(), Ordering::SeqCst);
        }
    }

    /// Time left until the clock reads `t`; zero for virtual clocks.
    pub fn until(&self, t: TimeValue) -> Duration {
        match self {
            PhysicalClock::Virtual(_) => Duration::ZERO,
            PhysicalClock::Monotonic(_) => {
                let left = t.saturating_sub(self.read()).as_nanos();
                Duration::from_nanos(left.max(0) as u64)
            }
        }
    }
}

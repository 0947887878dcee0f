//! Logical time: time values, superdense tags and the arithmetic used by
//! timers and after-delay connections.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("time overflow")]
    Overflow,
    #[error("microstep overflow at {0}")]
    MicrostepOverflow(Tag),
    #[error("negative delay {0}")]
    NegativeDelay(TimeValue),
    #[error("timer period must be positive")]
    NonPositivePeriod,
    #[error("invalid time literal `{0}`")]
    InvalidLiteral(String),
}

/// A count of logical nanoseconds since program start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeValue(i64);

impl TimeValue {
    pub const ZERO: TimeValue = TimeValue(0);
    pub const MAX: TimeValue = TimeValue(i64::MAX);

    pub const fn from_nanos(ns: i64) -> Self {
        TimeValue(ns)
    }

    pub const fn from_micros(us: i64) -> Self {
        TimeValue(us * 1_000)
    }

    pub const fn from_millis(ms: i64) -> Self {
        TimeValue(ms * 1_000_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        TimeValue(s * 1_000_000_000)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn checked_add(self, other: TimeValue) -> Result<TimeValue, TimeError> {
        self.0.checked_add(other.0).map(TimeValue).ok_or(TimeError::Overflow)
    }

    pub fn checked_sub(self, other: TimeValue) -> Result<TimeValue, TimeError> {
        self.0.checked_sub(other.0).map(TimeValue).ok_or(TimeError::Overflow)
    }

    /// Difference saturating at the `i64` range; used for lag measurements.
    pub fn saturating_sub(self, other: TimeValue) -> TimeValue {
        TimeValue(self.0.saturating_sub(other.0))
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Parses `<int> <unit>` (whitespace optional) or a bare `0`.
    pub fn parse_literal(text: &str) -> Result<TimeValue, TimeError> {
        let text = text.trim();
        let invalid = || TimeError::InvalidLiteral(text.to_string());
        let split = text.find(|c: char| !c.is_ascii_digit()).unwrap_or(text.len());
        let (digits, unit) = text.split_at(split);
        if digits.is_empty() {
            return Err(invalid());
        }
        let count: i64 = digits.parse().map_err(|_| invalid())?;
        let unit = unit.trim();
        if unit.is_empty() {
            return if count == 0 { Ok(TimeValue::ZERO) } else { Err(invalid()) };
        }
        let unit: TimeUnit = unit.parse().map_err(|_| invalid())?;
        unit.scale(count)
    }
}

impl fmt::Display for TimeValue {
    /// Prints the value in the largest unit that represents it exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.0;
        if ns == 0 {
            return write!(f, "0");
        }
        for unit in [TimeUnit::Min, TimeUnit::Sec, TimeUnit::Ms, TimeUnit::Us] {
            let per = unit.nanos_per();
            if ns % per == 0 {
                return write!(f, "{} {}", ns / per, unit.as_str());
            }
        }
        write!(f, "{ns} ns")
    }
}

impl FromStr for TimeValue {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TimeValue::parse_literal(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Ns,
    Us,
    Ms,
    Sec,
    Min,
}

impl TimeUnit {
    pub const fn nanos_per(self) -> i64 {
        match self {
            TimeUnit::Ns => 1,
            TimeUnit::Us => 1_000,
            TimeUnit::Ms => 1_000_000,
            TimeUnit::Sec => 1_000_000_000,
            TimeUnit::Min => 60_000_000_000,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Ns => "ns",
            TimeUnit::Us => "us",
            TimeUnit::Ms => "ms",
            TimeUnit::Sec => "s",
            TimeUnit::Min => "min",
        }
    }

    pub fn scale(self, count: i64) -> Result<TimeValue, TimeError> {
        count.checked_mul(self.nanos_per()).map(TimeValue).ok_or(TimeError::Overflow)
    }
}

impl FromStr for TimeUnit {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ns" => TimeUnit::Ns,
            "us" => TimeUnit::Us,
            "ms" => TimeUnit::Ms,
            "s" | "sec" => TimeUnit::Sec,
            "min" => TimeUnit::Min,
            _ => return Err(()),
        })
    }
}

/// A superdense logical time point. The derived order is lexicographic on
/// `(time, microstep)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tag {
    pub time: TimeValue,
    pub microstep: u32,
}

impl Tag {
    pub const ZERO: Tag = Tag { time: TimeValue::ZERO, microstep: 0 };
    /// Larger than any tag the scheduler can reach.
    pub const FOREVER: Tag = Tag { time: TimeValue::MAX, microstep: u32::MAX };

    pub const fn new(time: TimeValue, microstep: u32) -> Self {
        Tag { time, microstep }
    }

    pub fn compare(&self, other: &Tag) -> Ordering {
        self.cmp(other)
    }

    /// The tag of an event conveyed with `delay`: a positive delay advances
    /// time and resets the microstep, a zero delay advances the microstep.
    pub fn delay(self, delay: TimeValue) -> Result<Tag, TimeError> {
        if delay.0 < 0 {
            return Err(TimeError::NegativeDelay(delay));
        }
        if delay.0 == 0 {
            return self.next_microstep();
        }
        Ok(Tag { time: self.time.checked_add(delay)?, microstep: 0 })
    }

    pub fn next_microstep(self) -> Result<Tag, TimeError> {
        let microstep = self.microstep.checked_add(1).ok_or(TimeError::MicrostepOverflow(self))?;
        Ok(Tag { time: self.time, microstep })
    }

    /// The largest tag strictly before `self`, if any.
    pub fn predecessor(self) -> Option<Tag> {
        if self.microstep > 0 {
            Some(Tag { time: self.time, microstep: self.microstep - 1 })
        } else if self.time.0 > 0 {
            Some(Tag { time: TimeValue(self.time.0 - 1), microstep: u32::MAX })
        } else {
            None
        }
    }

    pub fn is_forever(&self) -> bool {
        *self == Tag::FOREVER
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_forever() {
            return write!(f, "(forever)");
        }
        write!(f, "({}, {})", self.time, self.microstep)
    }
}

// Wire and trace form: {"t": ns, "m": microstep}.
impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Tag", 2)?;
        s.serialize_field("t", &self.time.0)?;
        s.serialize_field("m", &self.microstep)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            t: i64,
            m: u32,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(Tag { time: TimeValue(raw.t), microstep: raw.m })
    }
}

/// Tag of the `occurrence`-th firing of a timer with the given offset and
/// period.
pub fn timer_next(offset: TimeValue, period: TimeValue, occurrence: u64) -> Result<Tag, TimeError> {
    if period.0 <= 0 {
        return Err(TimeError::NonPositivePeriod);
    }
    let k = i64::try_from(occurrence).map_err(|_| TimeError::Overflow)?;
    let span = period.0.checked_mul(k).ok_or(TimeError::Overflow)?;
    Ok(Tag { time: offset.checked_add(TimeValue(span))?, microstep: 0 })
}

/// Maximum acceptable physical-minus-logical lag at reaction invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Deadline {
    bound: TimeValue,
}

impl Deadline {
    pub fn new(bound: TimeValue) -> Option<Deadline> {
        bound.is_positive().then_some(Deadline { bound })
    }

    pub fn bound(&self) -> TimeValue {
        self.bound
    }

    /// A lag equal to the bound is still acceptable.
    pub fn is_violated(&self, lag: TimeValue) -> bool {
        lag > self.bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: i64) -> TimeValue {
        TimeValue::from_millis(v)
    }

    #[test]
    fn compare_examples() {
        assert_eq!(Tag::ZERO.compare(&Tag::ZERO), Ordering::Equal);
        assert_eq!(Tag::new(ms(10), 0).compare(&Tag::new(ms(10), 1)), Ordering::Less);
        assert_eq!(Tag::new(ms(3), 7).compare(&Tag::new(ms(10), 0)), Ordering::Less);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(Tag::new(ms(5), 2).delay(ms(10)).unwrap(), Tag::new(ms(15), 0));
        assert_eq!(Tag::new(ms(5), 2).delay(TimeValue::ZERO).unwrap(), Tag::new(ms(5), 3));
        assert_eq!(Tag::ZERO.delay(TimeValue::ZERO).unwrap(), Tag::new(TimeValue::ZERO, 1));
    }

    #[test]
    fn delay_errors() {
        let top = Tag::new(ms(1), u32::MAX);
        assert!(matches!(top.delay(TimeValue::ZERO), Err(TimeError::MicrostepOverflow(_))));
        assert_eq!(Tag::new(TimeValue::MAX, 0).delay(ms(1)), Err(TimeError::Overflow));
        assert!(matches!(Tag::ZERO.delay(TimeValue::from_nanos(-1)), Err(TimeError::NegativeDelay(_))));
    }

    #[test]
    fn timer_examples() {
        assert_eq!(timer_next(TimeValue::ZERO, ms(30), 0).unwrap(), Tag::new(ms(0), 0));
        assert_eq!(timer_next(TimeValue::ZERO, ms(30), 2).unwrap(), Tag::new(ms(60), 0));
        assert_eq!(timer_next(ms(5), ms(30), 1).unwrap(), Tag::new(ms(35), 0));
        assert_eq!(timer_next(ms(5), TimeValue::ZERO, 1), Err(TimeError::NonPositivePeriod));
        assert_eq!(timer_next(ms(5), TimeValue::MAX, 2), Err(TimeError::Overflow));
    }

    #[test]
    fn literals_round_trip() {
        for (text, ns) in [
            ("3 ms", 3_000_000),
            ("10 ms", 10_000_000),
            ("30 ms", 30_000_000),
            ("0", 0),
            ("7 ns", 7),
            ("2 us", 2_000),
            ("1 s", 1_000_000_000),
            ("1 sec", 1_000_000_000),
            ("2 min", 120_000_000_000),
            ("15ms", 15_000_000),
        ] {
            let v = TimeValue::parse_literal(text).unwrap();
            assert_eq!(v.as_nanos(), ns, "{text}");
            assert_eq!(TimeValue::parse_literal(&v.to_string()).unwrap(), v);
        }
        for bad in ["", "ms", "5", "5 hours", "-3 ms"] {
            assert!(TimeValue::parse_literal(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn deadline_boundary_is_inclusive() {
        let d = Deadline::new(ms(3)).unwrap();
        assert!(d.is_violated(ms(5)));
        assert!(!d.is_violated(ms(3)));
        assert!(!Deadline::new(ms(10)).unwrap().is_violated(ms(1)));
        assert!(Deadline::new(TimeValue::ZERO).is_none());
    }

    #[test]
    fn predecessor_steps_back() {
        assert_eq!(Tag::new(ms(10), 0).predecessor(), Some(Tag::new(TimeValue::from_nanos(9_999_999), u32::MAX)));
        assert_eq!(Tag::new(ms(10), 4).predecessor(), Some(Tag::new(ms(10), 3)));
        assert_eq!(Tag::ZERO.predecessor(), None);
    }

    fn arb_tag() -> impl Strategy<Value = Tag> {
        (0i64..1_000_000, 0u32..5).prop_map(|(t, m)| Tag::new(TimeValue::from_nanos(t), m))
    }

    proptest! {
        #[test]
        fn order_is_total(a in arb_tag(), b in arb_tag(), c in arb_tag()) {
            prop_assert_eq!(a.compare(&b), b.compare(&a).reverse());
            if a <= b && b <= c { prop_assert!(a <= c); }
            prop_assert!(a <= b || a > b);
        }

        #[test]
        fn delay_makes_progress(t in arb_tag(), d in 0i64..1_000_000) {
            prop_assert!(t.delay(TimeValue::from_nanos(d)).unwrap() > t);
        }

        #[test]
        fn positive_delays_compose(t in arb_tag(), d1 in 1i64..1_000_000, d2 in 1i64..1_000_000) {
            let (d1, d2) = (TimeValue::from_nanos(d1), TimeValue::from_nanos(d2));
            let once = t.delay(d1.checked_add(d2).unwrap()).unwrap();
            let twice = t.delay(d1).unwrap().delay(d2).unwrap();
            prop_assert_eq!(once.time, twice.time);
        }

        #[test]
        fn timer_strictly_increasing(o in 0i64..1_000, p in 1i64..1_000, k in 0u64..1_000) {
            let (o, p) = (TimeValue::from_nanos(o), TimeValue::from_nanos(p));
            prop_assert!(timer_next(o, p, k + 1).unwrap() > timer_next(o, p, k).unwrap());
        }
    }
}

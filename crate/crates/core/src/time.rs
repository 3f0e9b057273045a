use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// Simulated time in integer nanoseconds.
///
/// Integer time keeps event ordering exact and independent of floating-point
/// summation order, which is what makes two runs with the same seed
/// bit-identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0, "negative time {secs}");
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.as_secs_f64())
    }
}

/// Serialization time of `bytes` on a link of `capacity_bps`, rounded to the
/// nearest nanosecond.
pub fn transmission_time(bytes: u32, capacity_bps: f64) -> SimTime {
    SimTime::from_secs_f64(bytes as f64 * 8.0 / capacity_bps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_of_full_packet_on_100m() {
        assert_eq!(transmission_time(1500, 100e6), SimTime::from_micros(120));
    }

    #[test]
    fn seconds_round_trip() {
        let t = SimTime::from_secs_f64(0.0014639);
        assert_eq!(t.as_nanos(), 1_463_900);
        assert!((t.as_secs_f64() - 0.0014639).abs() < 1e-15);
    }
}

//! Simulation time.
//!
//! [`SimTime`] is a non-negative `f64` that may also be `+∞`. The infinite
//! value is only legal as a time advance or a time of next event; a clock
//! value handed to a transition is always finite.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Extended non-negative simulation time.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);
    pub const INFINITY: SimTime = SimTime(f64::INFINITY);

    /// Builds a time value, rejecting NaN and negative numbers.
    pub fn new(value: f64) -> Result<Self, Error> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::InvalidTime(value));
        }
        // Normalise -0.0 so that equality and serialisation agree.
        Ok(SimTime(if value == 0.0 { 0.0 } else { value }))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Elapsed time from `earlier` to `self`. Saturates at zero.
    pub fn since(self, earlier: SimTime) -> SimTime {
        if self.0 <= earlier.0 {
            SimTime::ZERO
        } else {
            SimTime(self.0 - earlier.0)
        }
    }

    pub fn min(self, other: SimTime) -> SimTime {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: SimTime) -> SimTime {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

/// Time of next event: `tl + ta`, where a passive time advance yields `+∞`.
pub fn next_tn(tl: SimTime, ta: SimTime) -> SimTime {
    tl + ta
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    /// Saturating difference; `∞ − ∞` is defined as zero.
    fn sub(self, rhs: SimTime) -> SimTime {
        if self.0.is_infinite() && rhs.0.is_infinite() {
            return SimTime::ZERO;
        }
        self.since(rhs)
    }
}

impl TryFrom<f64> for SimTime {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self, Error> {
        SimTime::new(value)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for SimTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if s == "inf" || s == "+inf" || s == "infinity" {
            return Ok(SimTime::INFINITY);
        }
        let v: f64 = s.parse().map_err(|_| Error::BadTimeLiteral(s.to_owned()))?;
        SimTime::new(v)
    }
}

// Finite times serialise as plain numbers, +∞ as the string "inf".
impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TimeVisitor;

        impl Visitor<'_> for TimeVisitor {
            type Value = SimTime;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<SimTime, E> {
                SimTime::new(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<SimTime, E> {
                SimTime::new(v as f64).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<SimTime, E> {
                SimTime::new(v as f64).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<SimTime, E> {
                if v == "inf" {
                    Ok(SimTime::INFINITY)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(TimeVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> SimTime {
        SimTime::new(v).unwrap()
    }

    #[test]
    fn next_tn_examples() {
        assert_eq!(next_tn(t(2.0), t(3.0)), t(5.0));
        assert_eq!(next_tn(t(7.5), SimTime::INFINITY), SimTime::INFINITY);
        assert_eq!(next_tn(t(0.0), t(0.0)), t(0.0));
    }

    #[test]
    fn rejects_nan_and_negative() {
        assert!(SimTime::new(f64::NAN).is_err());
        assert!(SimTime::new(-1.0).is_err());
        assert_eq!(SimTime::new(-0.0).unwrap().value().to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn serde_uses_inf_string() {
        assert_eq!(serde_json::to_string(&SimTime::INFINITY).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&t(12.5)).unwrap(), "12.5");
        let back: SimTime = serde_json::from_str("\"inf\"").unwrap();
        assert!(back.is_infinite());
        let back: SimTime = serde_json::from_str("10").unwrap();
        assert_eq!(back, t(10.0));
        assert!(serde_json::from_str::<SimTime>("-3").is_err());
    }

    #[test]
    fn ordering_puts_infinity_last() {
        let mut v = vec![SimTime::INFINITY, t(3.0), t(0.5)];
        v.sort();
        assert_eq!(v, vec![t(0.5), t(3.0), SimTime::INFINITY]);
    }
}

//! Extended nonnegative-infinity arithmetic.
//!
//! Potentials may take the value `+∞` (hard cores, hard walls). The value is
//! carried by an explicit variant instead of `f64::INFINITY` so that the
//! convention `0 · ∞ = 0` is applied deliberately wherever a weight meets an
//! infinite potential.

use std::fmt;
use std::ops::Add;

/// A real number or `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        !self.is_finite()
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::Infinite => None,
        }
    }

    /// Finite value or panic. Use only where infinity was excluded upstream.
    pub fn expect_finite(self, what: &str) -> f64 {
        self.finite()
            .unwrap_or_else(|| panic!("{what}: unexpected infinite value"))
    }

    /// Multiply by a nonnegative weight with `0 · ∞ = 0`.
    pub fn weighted(self, weight: f64) -> ExtReal {
        debug_assert!(weight >= 0.0, "weights must be nonnegative");
        match self {
            ExtReal::Finite(x) => ExtReal::Finite(x * weight),
            ExtReal::Infinite if weight == 0.0 => ExtReal::ZERO,
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }

    /// Lossy conversion for output: `+∞` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
            _ => ExtReal::Infinite,
        }
    }

    /// `self ≥ other` in the extended order.
    pub fn ge(self, other: ExtReal) -> bool {
        match (self, other) {
            (ExtReal::Infinite, _) => true,
            (ExtReal::Finite(_), ExtReal::Infinite) => false,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a >= b,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        debug_assert!(x.is_finite(), "use ExtReal::Infinite for infinite values");
        ExtReal::Finite(x)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

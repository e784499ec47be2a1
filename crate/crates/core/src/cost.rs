//! Violation costs: non-negative reals extended with an infinite sentinel.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;

/// A violation or penalty cost.
///
/// Either a finite non-negative value or the infinite sentinel that marks a
/// hard (never relaxable) constraint. The sentinel orders above every finite
/// cost and addition saturates, so `Cost` has a total order and can be used
/// directly as a search key. NaN is rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Cost(f64);

impl Cost {
    pub const ZERO: Cost = Cost(0.0);
    pub const INFINITE: Cost = Cost(f64::INFINITY);

    /// A finite non-negative cost. Panics on NaN or negative input; penalty
    /// tables are validated before they get here.
    pub fn finite(value: f64) -> Cost {
        assert!(
            value.is_finite() && value >= 0.0,
            "cost must be finite and non-negative, got {value}"
        );
        Cost(value)
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for Cost {}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // No NaN by construction.
        self.0.partial_cmp(&other.0).unwrap()
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturating_arithmetic_and_order() {
        let a = Cost::finite(10.0);
        let b = Cost::finite(20.0);
        assert_eq!(a + b, Cost::finite(30.0));
        assert_eq!(a + Cost::INFINITE, Cost::INFINITE);
        assert!(Cost::INFINITE > Cost::finite(1e308));
        assert!(Cost::ZERO < a);
    }

    #[test]
    fn display_trims_integral_values() {
        assert_eq!(Cost::finite(15.0).to_string(), "15");
        assert_eq!(Cost::finite(1.5).to_string(), "1.5");
        assert_eq!(Cost::INFINITE.to_string(), "inf");
    }
}

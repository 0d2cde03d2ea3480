//! Integrability exponents `p ∈ (1, ∞]` and the derived quantities shared by
//! the admissibility checks and the chaos constants.

use std::fmt;

use crate::error::{Error, Result};

/// An exponent in `(1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p > 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidInput(format!("exponent must lie in (1, inf], got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// Conjugate exponent `p/(p-1)`, with `∞ ↦ 1`.
    pub fn conjugate(self) -> f64 {
        match self {
            Exponent::Finite(p) => p / (p - 1.0),
            Exponent::Infinity => 1.0,
        }
    }

    /// `(2p-1)/(p-1)`, with the limit 2 at `p = ∞`.
    pub fn chaos_factor(self) -> f64 {
        match self {
            Exponent::Finite(p) => (2.0 * p - 1.0) / (p - 1.0),
            Exponent::Infinity => 2.0,
        }
    }

    /// `d/p`, which vanishes at `p = ∞`.
    pub fn dim_over(self, d: usize) -> f64 {
        match self {
            Exponent::Finite(p) => d as f64 / p,
            Exponent::Infinity => 0.0,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t, "inf" | "infinity" | "Inf" | "INF") {
            return Ok(Exponent::Infinity);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::InvalidInput(format!("cannot parse exponent '{s}'")))?;
        Exponent::new(p)
    }
}

/// Lower end of the admissible `γ` interval, `p'(2p-1)(1+α)/(d(p-1))`.
///
/// Both the chaos-regime flag of the admissibility report and
/// `chaos_constants` derive from this one value, so they agree exactly.
pub fn chaos_gamma_lower(d: usize, p: Exponent, alpha: f64) -> f64 {
    p.conjugate() * p.chaos_factor() * (1.0 + alpha) / d as f64
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn conjugates() {
        assert_eq!(Exponent::Infinity.conjugate(), 1.0);
        assert_relative_eq!(Exponent::Finite(2.0).conjugate(), 2.0);
        assert_relative_eq!(Exponent::Finite(3.0).conjugate(), 1.5);
        assert!(Exponent::new(1.0).is_err());
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinity);
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(2), std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(3), 4.0 / 3.0 * std::f64::consts::PI, epsilon = 1e-12);
    }
}

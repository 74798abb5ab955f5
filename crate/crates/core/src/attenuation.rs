//! Path-loss models.
//!
//! Two families are supported: the singular power law `g(x) = x^-a` and the
//! bounded power law `g(x) = (r0 + x)^-a`. The singular law is what the
//! sub-critical lattice construction assumes; the super-critical and
//! lower-bound constructions need `g(0)` finite and `int_0^inf x g(x) dx`
//! finite, which only the bounded family provides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttenuationModel {
    PowerLaw { alpha: f64 },
    BoundedPowerLaw { alpha: f64, r0: f64 },
}

/// Value of an improper integral that may diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn finite(self) -> Option<f64> {
        match self {
            Integral::Finite(v) => Some(v),
            Integral::Divergent => None,
        }
    }
}

pub const DEFAULT_R0: f64 = 1.0;

impl AttenuationModel {
    pub fn power_law(alpha: f64) -> Result<Self> {
        let m = AttenuationModel::PowerLaw { alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn bounded(alpha: f64, r0: f64) -> Result<Self> {
        let m = AttenuationModel::BoundedPowerLaw { alpha, r0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (alpha, r0) = match *self {
            AttenuationModel::PowerLaw { alpha } => (alpha, 1.0),
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => (alpha, r0),
        };
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config(format!(
                "path-loss exponent must be finite and positive, got {alpha}"
            )));
        }
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::config(format!("r0 must be finite and positive, got {r0}")));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            AttenuationModel::PowerLaw { alpha } | AttenuationModel::BoundedPowerLaw { alpha, .. } => alpha,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, AttenuationModel::BoundedPowerLaw { .. })
    }

    /// `g(0)`, infinite for the singular law.
    pub fn value_at_zero(&self) -> f64 {
        match *self {
            AttenuationModel::PowerLaw { .. } => f64::INFINITY,
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => r0.powf(-alpha),
        }
    }

    /// `g(d)` without domain checks; the singular law returns `+inf` at 0.
    #[inline]
    pub fn gain(&self, d: f64) -> f64 {
        match *self {
            AttenuationModel::PowerLaw { alpha } => pow_neg(d, alpha),
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => pow_neg(r0 + d, alpha),
        }
    }

    /// `ln g(d)`, finite wherever `g(d)` is positive even if `g(d)` overflows.
    pub fn log_gain(&self, d: f64) -> f64 {
        match *self {
            AttenuationModel::PowerLaw { alpha } => -alpha * d.ln(),
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => -alpha * (r0 + d).ln(),
        }
    }

    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) || d.is_infinite() {
            return Err(Error::domain(format!("distance must be finite and non-negative, got {d}")));
        }
        if d == 0.0 && !self.is_bounded() {
            return Err(Error::domain("power-law attenuation is singular at distance 0"));
        }
        Ok(self.gain(d))
    }

    /// Distance at which the received power ratio equals `y`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        match *self {
            AttenuationModel::PowerLaw { alpha } => {
                if !(y > 0.0 && y.is_finite()) {
                    return Err(Error::domain(format!("{y} is outside the range (0, inf) of g")));
                }
                Ok(y.powf(-1.0 / alpha))
            }
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => {
                let top = self.value_at_zero();
                if !(y > 0.0 && y <= top) {
                    return Err(Error::domain(format!("{y} is outside the range (0, {top}] of g")));
                }
                Ok((y.powf(-1.0 / alpha) - r0).max(0.0))
            }
        }
    }

    /// `int_0^inf x g(x) dx`.
    pub fn tail_integral(&self) -> Integral {
        match *self {
            AttenuationModel::PowerLaw { .. } => Integral::Divergent,
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => {
                if alpha > 2.0 {
                    Integral::Finite(r0.powf(2.0 - alpha) / ((alpha - 1.0) * (alpha - 2.0)))
                } else {
                    Integral::Divergent
                }
            }
        }
    }

    /// `int_0^inf g(x) dx`, the line integral entering the interference tail bound.
    pub fn line_integral(&self) -> Integral {
        match *self {
            AttenuationModel::PowerLaw { .. } => Integral::Divergent,
            AttenuationModel::BoundedPowerLaw { alpha, r0 } => {
                if alpha > 1.0 {
                    Integral::Finite(r0.powf(1.0 - alpha) / (alpha - 1.0))
                } else {
                    Integral::Divergent
                }
            }
        }
    }

    /// Upper bound on the spectral norm of the Hessian of `p -> g(|p|)` over
    /// all points at distance at least `r_min > 0` from the origin.
    ///
    /// For a radial function the Hessian eigenvalues are `g''(r)` and
    /// `g'(r)/r`; for both families these are monotone in `r`, so the bound is
    /// attained at `r_min`.
    pub fn curvature_bound(&self, r_min: f64) -> f64 {
        if !(r_min > 0.0) {
            return f64::INFINITY;
        }
        let alpha = self.alpha();
        let (u, r) = match *self {
            AttenuationModel::PowerLaw { .. } => (r_min, r_min),
            AttenuationModel::BoundedPowerLaw { r0, .. } => (r0 + r_min, r_min),
        };
        let second = alpha * (alpha + 1.0) * pow_neg(u, alpha + 2.0);
        let radial = alpha * pow_neg(u, alpha + 1.0) / r;
        second.max(radial)
    }
}

/// `x^-a` with a fast path for integer exponents.
#[inline]
fn pow_neg(x: f64, a: f64) -> f64 {
    if a == 4.0 {
        let x2 = x * x;
        1.0 / (x2 * x2)
    } else if a == 2.0 {
        1.0 / (x * x)
    } else {
        x.powf(-a)
    }
}

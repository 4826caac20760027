//! Concave utility functions and the per-slot rate control they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Utility of an average admitted rate `x` (bits/slot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// `b·x`.
    Linear { b: f64 },
    /// `ln(1 + x/scale)`.
    Log { scale: f64 },
    /// `((1 + x/scale)^α − 1)/α`, with `α ≤ 1`, `α ≠ 0`.
    Isoelastic { scale: f64, alpha: f64 },
}

impl Utility {
    /// Checks positivity and concavity.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Utility::Linear { b } if !(b > 0.0 && b.is_finite()) => {
                Err(Error::NonConcaveUtility(format!("linear slope {b} must be positive")))
            }
            Utility::Log { scale } | Utility::Isoelastic { scale, .. }
                if !(scale > 0.0 && scale.is_finite()) =>
            {
                Err(Error::NonConcaveUtility(format!("scale {scale} must be positive")))
            }
            Utility::Isoelastic { alpha, .. } if alpha > 1.0 || alpha == 0.0 || !alpha.is_finite() => {
                Err(Error::NonConcaveUtility(format!(
                    "isoelastic exponent {alpha} must be finite, nonzero and at most 1"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Utility::Linear { b } => b * x,
            Utility::Log { scale } => (x / scale).ln_1p(),
            Utility::Isoelastic { scale, alpha } => ((1.0 + x / scale).powf(alpha) - 1.0) / alpha,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Linear { b } => b,
            Utility::Log { scale } => 1.0 / (scale + x),
            Utility::Isoelastic { scale, alpha } => (1.0 + x / scale).powf(alpha - 1.0) / scale,
        }
    }

    /// `U′(0)`, the constant `b` in the backlog bound `q ≤ bV/2`.
    pub fn slope_at_zero(&self) -> f64 {
        self.derivative(0.0)
    }
}

/// Admitted bits this slot: the maximizer of `V·U(x) − x² − 2qx` over
/// `[0, d_cap]`.
///
/// The result also satisfies `q + x ≤ U′(0)·V/2` exactly, so backlogs that
/// start below the bound stay below it.
pub fn rate_control(q: f64, v: f64, utility: &Utility, d_cap: f64) -> f64 {
    let x = match *utility {
        Utility::Linear { b } => (b * v / 2.0 - q).max(0.0).min(d_cap),
        Utility::Log { scale: k } => {
            // Positive root of 2x² + 2(K+q)x + (2qK − V) = 0, in the form
            // that does not cancel when V ≫ qK.
            let disc = ((k - q) * (k - q) + 2.0 * v).sqrt();
            ((v - 2.0 * q * k) / ((k + q) + disc)).clamp(0.0, d_cap)
        }
        Utility::Isoelastic { .. } => {
            let g = |x: f64| v * utility.derivative(x) - 2.0 * x - 2.0 * q;
            if g(0.0) <= 0.0 {
                0.0
            } else if g(d_cap) >= 0.0 {
                d_cap
            } else {
                let (mut lo, mut hi) = (0.0, d_cap);
                while hi - lo > 1e-9 * hi.max(1e-300) {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    };
    let bound = utility.slope_at_zero() * v / 2.0;
    let mut x = x.max(0.0);
    while x > 0.0 && q + x > bound {
        x = if q >= bound { 0.0 } else { f64::next_down(x.min(bound - q)) };
    }
    x
}

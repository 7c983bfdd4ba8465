//! The feedback nonlinearity `f_K` and its unstable fixed points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem instance: plateau level `K` and ramp half-width `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    pub k: f64,
    pub eps: f64,
}

/// The two fixed points of `f_K` lying on the ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointsOfF {
    pub chi_plus: f64,
    pub chi_minus: f64,
}

impl FeedbackParams {
    /// Validates `eps in (0, 1)` and `K > 0`, which is all `f_K` needs.
    pub fn new(k: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps = {eps} not in (0, 1)")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("K = {k} must be positive")));
        }
        Ok(Self { k, eps })
    }

    /// Odd, nondecreasing, piecewise linear:
    /// `-K` on `(-inf, -1-eps]`, ramp of slope `K/eps` on `(-1-eps, -1)`,
    /// `0` on `[-1, 1]`, ramp on `(1, 1+eps)`, `K` on `[1+eps, inf)`.
    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        let v = if ax <= 1.0 {
            0.0
        } else if ax >= 1.0 + self.eps {
            self.k
        } else {
            self.k / self.eps * (ax - 1.0)
        };
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    /// `chi_+ = K/(K - eps)`, the solution of `x = (K/eps)(x - 1)`.
    pub fn fixed_points(&self) -> Result<FixedPointsOfF> {
        if self.k <= 1.0 + self.eps {
            return Err(Error::Domain(format!(
                "K = {} <= 1 + eps = {}: fixed points leave the ramps",
                self.k,
                1.0 + self.eps
            )));
        }
        let chi_plus = self.k / (self.k - self.eps);
        Ok(FixedPointsOfF { chi_plus, chi_minus: -chi_plus })
    }
}

/// Free-function form of [`FeedbackParams::eval`].
pub fn eval_feedback(p: &FeedbackParams, x: f64) -> f64 {
    p.eval(x)
}

/// Free-function form of [`FeedbackParams::fixed_points`].
pub fn fixed_points(p: &FeedbackParams) -> Result<FixedPointsOfF> {
    p.fixed_points()
}

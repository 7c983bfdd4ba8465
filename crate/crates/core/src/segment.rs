//! Exponential-polynomial segments `c0 + (a0 + a1 t + a2 t^2) e^{-t}` on `[0, L]`.
//!
//! Coefficients are stored in the equivalent form
//!
//! ```text
//! y(t) = e^{-t} (z0 + z1 t + z2 t^2 + c0 R3(t)),   R3(t) = e^t - 1 - t - t^2/2,
//! ```
//!
//! where `z0 = a0 + c0`, `z1 = a1 + c0`, `z2 = a2 + c0/2` are the Taylor
//! coefficients of `e^t y(t)` at `0`. On the ramp pieces `c0` is of order
//! `1/eps^2` while `y` is of order one; this form keeps that cancellation out
//! of floating point, since `c0` only multiplies the small remainder `R3`.

use serde::{Deserialize, Serialize};

use crate::kernels::exp_remainder;
use crate::roots::{safeguarded_newton, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpPolySegment {
    pub length: f64,
    pub c0: f64,
    pub z0: f64,
    pub z1: f64,
    pub z2: f64,
}

/// Direction of a level crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl ExpPolySegment {
    pub fn new(length: f64, c0: f64, z0: f64, z1: f64, z2: f64) -> Self {
        Self { length, c0, z0, z1, z2 }
    }

    /// From the coefficients of `c0 + (a0 + a1 t + a2 t^2) e^{-t}`.
    pub fn from_coeffs(length: f64, c0: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self { length, c0, z0: a0 + c0, z1: a1 + c0, z2: a2 + 0.5 * c0 }
    }

    pub fn constant(value: f64, length: f64) -> Self {
        Self { length, c0: value, z0: value, z1: value, z2: 0.5 * value }
    }

    pub fn a0(&self) -> f64 {
        self.z0 - self.c0
    }

    pub fn a1(&self) -> f64 {
        self.z1 - self.c0
    }

    pub fn a2(&self) -> f64 {
        self.z2 - 0.5 * self.c0
    }

    pub fn is_finite(&self) -> bool {
        [self.length, self.c0, self.z0, self.z1, self.z2].iter().all(|v| v.is_finite())
    }

    /// `e^t y(t)`.
    fn z(&self, t: f64) -> f64 {
        self.z0 + t * (self.z1 + t * self.z2) + self.c0 * exp_remainder(3, t)
    }

    fn z_dot(&self, t: f64) -> f64 {
        self.z1 + 2.0 * self.z2 * t + self.c0 * exp_remainder(2, t)
    }

    fn z_ddot(&self, t: f64) -> f64 {
        2.0 * self.z2 + self.c0 * exp_remainder(1, t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (-t).exp() * self.z(t)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        (-t).exp() * (self.z_dot(t) - self.z(t))
    }

    /// `y'(t) + y(t)`, the forcing this segment solves `y' = -y + forcing` for.
    pub fn forcing(&self, t: f64) -> f64 {
        (-t).exp() * self.z_dot(t)
    }

    pub fn end_value(&self) -> f64 {
        self.eval(self.length)
    }

    /// The same function re-anchored at `s`: `t -> y(s + t)` on `[0, L - s]`.
    pub fn shifted(&self, s: f64) -> Self {
        let e = (-s).exp();
        Self {
            length: self.length - s,
            c0: self.c0,
            z0: e * self.z(s),
            z1: e * self.z_dot(s),
            z2: 0.5 * e * self.z_ddot(s),
        }
    }

    /// `[s, s + len]` of this segment as a segment of its own.
    pub fn restricted(&self, s: f64, len: f64) -> Self {
        let mut seg = if s == 0.0 { *self } else { self.shifted(s) };
        seg.length = len;
        seg
    }

    /// `-y`.
    pub fn negated(&self) -> Self {
        Self { length: self.length, c0: -self.c0, z0: -self.z0, z1: -self.z1, z2: -self.z2 }
    }

    /// Coefficients `(p0, p1, p2)` of `e^t y'(t) = p0 + p1 t + p2 t^2`.
    pub fn derivative_quadratic(&self) -> (f64, f64, f64) {
        (self.z1 - self.z0, 2.0 * self.z2 - self.z1, 0.5 * self.c0 - self.z2)
    }

    /// Zeros of `y'` strictly inside `(0, L)`, ascending.
    pub fn critical_points(&self) -> Vec<f64> {
        let (p0, p1, p2) = self.derivative_quadratic();
        quadratic_roots(p0, p1, p2)
            .into_iter()
            .filter(|&t| t > 0.0 && t < self.length)
            .collect()
    }

    /// Breakpoints `0 = s_0 < ... < s_m = L` between which `y` is monotone.
    pub fn monotone_breaks(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend(self.critical_points());
        b.push(self.length);
        b
    }

    /// Minimum and maximum of `y` over `[0, L]`.
    pub fn range(&self) -> (f64, f64) {
        self.monotone_breaks()
            .into_iter()
            .map(|t| self.eval(t))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Times in `(0, L]` where `y` crosses `level`, with direction, found by
    /// Newton on each monotone sub-piece.
    ///
    /// A sub-piece end within `band` of the level counts as lying on it; such a
    /// touch is reported once, at the piece end, if the sign actually changes.
    pub fn crossings(&self, level: f64, band: f64) -> Vec<(f64, Direction)> {
        let breaks = self.monotone_breaks();
        let side = |v: f64| -> i8 {
            if (v - level).abs() <= band {
                0
            } else if v > level {
                1
            } else {
                -1
            }
        };
        let mut out: Vec<(f64, Direction)> = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (va, vb) = (self.eval(a), self.eval(b));
            let (sa, sb) = (side(va), side(vb));
            if sa != 0 && sb != 0 && sa != sb {
                let tol = Tolerance { x_abs: 1e-16, x_rel: 2.0 * f64::EPSILON, f_abs: 0.0, max_iter: 200 };
                let f = |t: f64| Ok((self.eval(t) - level, self.deriv(t)));
                let guess = a + (b - a) * (level - va) / (vb - va);
                let t = match safeguarded_newton(f, a, b, guess, tol) {
                    Ok(r) => r.x,
                    Err(_) => guess,
                };
                let dir = if sb > 0 { Direction::Up } else { Direction::Down };
                out.push((t, dir));
            }
        }
        out
    }
}

/// Real roots of `p0 + p1 t + p2 t^2`, ascending, computed without cancellation.
pub fn quadratic_roots(p0: f64, p1: f64, p2: f64) -> Vec<f64> {
    let scale = p0.abs().max(p1.abs()).max(p2.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if p2.abs() <= 1e-300 || p2.abs() < scale * 1e-17 {
        if p1 == 0.0 {
            return Vec::new();
        }
        return vec![-p0 / p1];
    }
    let disc = p1 * p1 - 4.0 * p2 * p0;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (p1 + disc.sqrt().copysign(p1));
    let mut r = if q == 0.0 { vec![0.0] } else { vec![q / p2, p0 / q] };
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r.dedup();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn naive(c0: f64, a0: f64, a1: f64, a2: f64, t: f64) -> f64 {
        c0 + (a0 + a1 * t + a2 * t * t) * (-t).exp()
    }

    #[test]
    fn coefficient_round_trip() {
        let s = ExpPolySegment::from_coeffs(1.0, 2.0, -0.5, 0.25, 3.0);
        assert_relative_eq!(s.a0(), -0.5, epsilon = 1e-15);
        assert_relative_eq!(s.a1(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(s.a2(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_is_flat() {
        let s = ExpPolySegment::constant(1.25, 0.7);
        for i in 0..=10 {
            let t = 0.07 * i as f64;
            assert_relative_eq!(s.eval(t), 1.25, epsilon = 1e-15);
            assert!(s.deriv(t).abs() < 1e-15);
        }
        assert!(s.critical_points().is_empty());
    }

    #[test]
    fn large_constant_with_small_remainder() {
        // c0 = 1e8 times a cubic tail: the naive form loses eight digits
        let c0 = 1e8;
        let s = ExpPolySegment::new(1e-3, c0, 1.0, 0.0, 0.0);
        let t: f64 = 1e-3;
        let exact = (-t).exp() * (1.0 + c0 * (t * t * t / 6.0 + t.powi(4) / 24.0 + t.powi(5) / 120.0 + t.powi(6) / 720.0));
        assert_relative_eq!(s.eval(t), exact, max_relative = 1e-14);
    }

    #[test]
    fn quadratic_roots_cases() {
        assert_eq!(quadratic_roots(-1.0, 0.0, 1.0), vec![-1.0, 1.0]);
        assert_eq!(quadratic_roots(1.0, 0.0, 1.0), Vec::<f64>::new());
        assert_eq!(quadratic_roots(-2.0, 1.0, 0.0), vec![2.0]);
        let r = quadratic_roots(1e-10, -1.0, 1.0);
        assert_relative_eq!(r[0], 1e-10, max_relative = 1e-12);
    }

    #[test]
    fn crossing_of_decaying_exponential() {
        let s = ExpPolySegment::new(1.0, 0.0, 2.0, 0.0, 0.0);
        let c = s.crossings(1.0, 1e-12);
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c[0].0, 2f64.ln(), epsilon = 1e-15);
        assert_eq!(c[0].1, Direction::Down);
    }

    proptest! {
        #[test]
        fn matches_naive_form(
            c0 in -5.0f64..5.0, a0 in -5.0f64..5.0, a1 in -5.0f64..5.0, a2 in -5.0f64..5.0, t in 0.0f64..2.0
        ) {
            let s = ExpPolySegment::from_coeffs(2.0, c0, a0, a1, a2);
            prop_assert!((s.eval(t) - naive(c0, a0, a1, a2, t)).abs() < 1e-13);
            let d = (a1 + 2.0 * a2 * t - a0 - a1 * t - a2 * t * t) * (-t).exp();
            prop_assert!((s.deriv(t) - d).abs() < 1e-13);
        }

        #[test]
        fn shift_preserves_values(
            c0 in -5.0f64..5.0, a0 in -5.0f64..5.0, a1 in -5.0f64..5.0, a2 in -5.0f64..5.0,
            s0 in 0.0f64..1.0, t in 0.0f64..1.0
        ) {
            let s = ExpPolySegment::from_coeffs(2.0, c0, a0, a1, a2);
            let sh = s.shifted(s0);
            prop_assert!((sh.eval(t) - s.eval(s0 + t)).abs() < 1e-12);
            prop_assert!((sh.length - (2.0 - s0)).abs() < 1e-15);
        }

        #[test]
        fn critical_points_zero_the_derivative(
            c0 in -5.0f64..5.0, a0 in -5.0f64..5.0, a1 in -5.0f64..5.0, a2 in -5.0f64..5.0
        ) {
            let s = ExpPolySegment::from_coeffs(3.0, c0, a0, a1, a2);
            for t in s.critical_points() {
                let scale = 1.0 + c0.abs() + a0.abs() + a1.abs() + a2.abs();
                prop_assert!(s.deriv(t).abs() < 1e-12 * scale);
            }
            let (lo, hi) = s.range();
            for i in 0..=300 {
                let v = s.eval(3.0 * i as f64 / 300.0);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}

//! Bracketed scalar root finders.

use crate::error::{Error, Result};

/// Stopping rule shared by the bracketed solvers.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Absolute tolerance on the bracket width.
    pub x_abs: f64,
    /// Relative tolerance on the bracket width.
    pub x_rel: f64,
    /// Accept any iterate with `|f| <= f_abs`.
    pub f_abs: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { x_abs: 1e-15, x_rel: 4.0 * f64::EPSILON, f_abs: 0.0, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

fn check_bracket(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<()> {
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo * f_hi > 0.0 {
        return Err(Error::NoBracket { lo, hi, f_lo, f_hi });
    }
    Ok(())
}

/// Newton's method kept inside a sign-change bracket.
///
/// `fdf` returns `(f, f')`. A Newton step that leaves the current bracket, or
/// fails to halve it in two consecutive steps, is replaced by bisection.
pub fn safeguarded_newton<F>(mut fdf: F, lo: f64, hi: f64, x0: f64, tol: Tolerance) -> Result<Root>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (f_lo, _) = fdf(lo)?;
    let (f_hi, _) = fdf(hi)?;
    check_bracket(lo, hi, f_lo, f_hi)?;
    if f_lo == 0.0 {
        return Ok(Root { x: lo, fx: 0.0, iterations: 0 });
    }
    if f_hi == 0.0 {
        return Ok(Root { x: hi, fx: 0.0, iterations: 0 });
    }
    // orient so that f(a) < 0 < f(b)
    let (mut a, mut b) = if f_lo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut x = if x0 > lo.min(hi) && x0 < lo.max(hi) { x0 } else { 0.5 * (lo + hi) };
    let mut width_prev = (b - a).abs();
    let mut slow = 0;
    for it in 1..=tol.max_iter {
        let (fx, dfx) = fdf(x)?;
        if fx == 0.0 || fx.abs() <= tol.f_abs {
            return Ok(Root { x, fx, iterations: it });
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let width = (b - a).abs();
        if width <= tol.x_abs + tol.x_rel * x.abs() {
            return Ok(Root { x, fx, iterations: it });
        }
        if width > 0.5 * width_prev {
            slow += 1;
        } else {
            slow = 0;
        }
        width_prev = width;
        let newton = x - fx / dfx;
        let inside = newton.is_finite() && newton > a.min(b) && newton < a.max(b);
        if inside && slow < 2 {
            // a converged Newton step that no longer moves x ends the search
            if (newton - x).abs() <= tol.x_abs + tol.x_rel * x.abs() {
                let (fn_, _) = fdf(newton)?;
                return Ok(Root { x: newton, fx: fn_, iterations: it + 1 });
            }
            x = newton;
        } else {
            x = 0.5 * (a + b);
            slow = 0;
        }
    }
    Err(Error::MaxIterations(tol.max_iter))
}

/// Brent's method (inverse quadratic interpolation, secant, bisection).
pub fn brent<F>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    check_bracket(lo, hi, fa, fb)?;
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0 });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=tol.max_iter {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * (tol.x_abs + tol.x_rel * b.abs());
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= tol.f_abs {
            return Ok(Root { x: b, fx: fb, iterations: it });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Err(Error::MaxIterations(tol.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn newton_finds_sqrt2() {
        let r = safeguarded_newton(|x| Ok((x * x - 2.0, 2.0 * x)), 0.0, 2.0, 1.0, Tolerance::default())
            .unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn newton_survives_flat_derivative() {
        // f' = 0 at the initial guess; the step is rejected in favour of bisection
        let r = safeguarded_newton(
            |x| Ok((x * x * x - x - 1.0, 3.0 * x * x - 1.0)),
            1.0,
            2.0,
            1.0 / 3f64.sqrt() + 1e-300,
            Tolerance::default(),
        )
        .unwrap();
        assert!((r.x.powi(3) - r.x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn brent_cubic() {
        let r = brent(|x| Ok((x + 3.0) * (x - 1.0) * (x - 1.0)), -4.0, 4.0 / 3.0, Tolerance::default())
            .unwrap();
        assert!((r.x + 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_missing_bracket() {
        let e = brent(|x| Ok(x * x + 1.0), -1.0, 1.0, Tolerance::default()).unwrap_err();
        assert!(matches!(e, Error::NoBracket { .. }));
        let e = safeguarded_newton(|x| Ok((x * x + 1.0, 2.0 * x)), -1.0, 1.0, 0.0, Tolerance::default())
            .unwrap_err();
        assert!(matches!(e, Error::NoBracket { .. }));
    }

    proptest! {
        #[test]
        fn both_solvers_agree_on_shifted_exponential(c in 0.1f64..10.0) {
            let f = |x: f64| x.exp() - c;
            let n = safeguarded_newton(|x| Ok((f(x), x.exp())), -5.0, 5.0, 0.0, Tolerance::default()).unwrap();
            let b = brent(|x| Ok(f(x)), -5.0, 5.0, Tolerance::default()).unwrap();
            prop_assert!((n.x - c.ln()).abs() < 1e-13);
            prop_assert!((b.x - c.ln()).abs() < 1e-13);
        }
    }
}

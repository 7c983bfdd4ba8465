//! Cancellation-safe scalar kernels.
//!
//! Every `(1/eps)`-scaled expression in the reduced map is a small quantity
//! divided by a small quantity. These kernels evaluate the small numerators
//! without subtracting nearly equal numbers.

/// Switch-over below which the polynomial-type kernels use their Taylor series.
const SERIES_CUTOFF: f64 = 1e-3;

/// `e^x - 1`.
#[inline]
pub fn em1(x: f64) -> f64 {
    x.exp_m1()
}

/// `ln(1 + x)`.
#[inline]
pub fn l1p(x: f64) -> f64 {
    x.ln_1p()
}

/// `1/k!` for `k = 0..24`.
const INV_FACT: [f64; 24] = {
    let mut t = [1.0f64; 24];
    let mut k = 1;
    while k < 24 {
        t[k] = t[k - 1] / k as f64;
        k += 1;
    }
    t
};

/// `1 - (1 - x) e^x = x^2/2 + x^3/3 + x^4/8 + ...`
///
/// The general term is `(n-1)/n! x^n`.
pub fn one_minus_one_minus_x_exp(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        // terms through x^8; the first omitted one is below 1e-20 relative
        let mut acc = 0.0;
        for n in (2..=8).rev() {
            acc = acc * x + (n - 1) as f64 * INV_FACT[n];
        }
        acc * x * x
    } else {
        -em1(x) + x * x.exp()
    }
}

/// Taylor remainder `e^t - sum_{k<n} t^k/k!` for `n` in `1..=3`.
///
/// `exp_remainder(1, t) = e^t - 1`, `exp_remainder(2, t) = e^t - 1 - t`,
/// `exp_remainder(3, t) = e^t - 1 - t - t^2/2`.
pub fn exp_remainder(n: u32, t: f64) -> f64 {
    debug_assert!((1..=3).contains(&n));
    if t.abs() <= 1.0 {
        let n = n as usize;
        let terms = if t.abs() < 1e-2 { 8 } else { 20 };
        let mut acc = 0.0;
        for j in (0..terms).rev() {
            acc = acc * t + INV_FACT[n + j];
        }
        acc * t.powi(n as i32)
    } else {
        match n {
            1 => em1(t),
            2 => em1(t) - t,
            _ => em1(t) - t - 0.5 * t * t,
        }
    }
}

/// `1 - (1 + x + x^2/2) e^{-x} = e^{-x} (e^x - 1 - x - x^2/2)`, which is `x^3/6 + O(x^4)`.
pub fn cubic_exp_tail(x: f64) -> f64 {
    (-x).exp() * exp_remainder(3, x)
}

/// `1 - (1 + x) e^{-x} = e^{-x} (e^x - 1 - x)`, which is `x^2/2 + O(x^3)`.
pub fn quadratic_exp_tail(x: f64) -> f64 {
    (-x).exp() * exp_remainder(2, x)
}

/// `(u - ln(1 + u)) / u = u/2 - u^2/3 + u^3/4 - ...`, for `u > -1`, `u != 0`.
///
/// At `u = 0` the limit 0 is returned.
pub fn log1p_defect(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        let mut sum = 0.0f64;
        let mut pow = u;
        for n in 2..16 {
            let term = pow / n as f64;
            sum += if n % 2 == 0 { term } else { -term };
            pow *= u;
        }
        sum
    } else {
        (u - l1p(u)) / u
    }
}

/// `ln((K-1)/(K-1-eps))` as `ln_1p(eps/(K-1-eps))`; takes `km1 = K - 1`.
#[inline]
pub fn log_ratio(km1: f64, eps: f64) -> f64 {
    l1p(eps / (km1 - eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_and_direct_branches_agree_at_cutoff() {
        for &x in &[SERIES_CUTOFF * 0.999_999, -SERIES_CUTOFF * 0.999_999] {
            let series = one_minus_one_minus_x_exp(x);
            let direct = -em1(x) + x * x.exp();
            assert!(((series - direct) / series).abs() < 1e-9, "{series} vs {direct}");
        }
    }

    #[test]
    fn small_argument_leading_terms() {
        let x = 1e-6;
        let g = one_minus_one_minus_x_exp(x);
        let lead = x * x / 2.0 + x * x * x / 3.0;
        assert!(((g - lead) / lead).abs() < 1e-12);
        let h = cubic_exp_tail(x);
        let lead = x * x * x / 6.0 - x.powi(4) / 8.0;
        assert!(((h - lead) / lead).abs() < 1e-11);
        assert!((quadratic_exp_tail(x) / (x * x / 2.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn log1p_defect_branches_agree() {
        for &u in &[0.009_999_9, -0.009_999_9, 1e-5] {
            let direct = (u - f64::ln_1p(u)) / u;
            let series = log1p_defect(u);
            assert!(((series - direct) / series).abs() < 1e-9, "{u}");
        }
        assert_eq!(log1p_defect(0.0), 0.0);
        assert!((log1p_defect(0.5) - (0.5 - 1.5f64.ln()) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn remainders_match_direct_for_moderate_arguments() {
        for &t in &[-0.9, -0.3, 0.4, 0.99, 1.5, 3.0] {
            let e = f64::exp(t);
            assert!((exp_remainder(1, t) - (e - 1.0)).abs() < 1e-14);
            assert!((exp_remainder(2, t) - (e - 1.0 - t)).abs() < 1e-14);
            assert!((exp_remainder(3, t) - (e - 1.0 - t - t * t / 2.0)).abs() < 1e-14);
        }
        assert_eq!(exp_remainder(3, 0.0), 0.0);
    }
}

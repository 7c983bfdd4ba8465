//! The closed-form parameter chain and the scalar reduction map `F(L2, K, eps)`.
//!
//! A periodic orbit of the delay equation is cut into ten exponential pieces
//! whose durations `L1..L5` and junction levels `theta1..theta6` are fixed by
//! `L2`, `K` and `eps`. The orbit closes exactly when `F(L2, K, eps) = L2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    cubic_exp_tail, em1, exp_remainder, l1p, log1p_defect, log_ratio, one_minus_one_minus_x_exp, quadratic_exp_tail,
};
use crate::roots::{safeguarded_newton, Tolerance};

/// Lower end of the bifurcation parameter window.
pub const K_MIN: f64 = 6.5;
/// Upper end of the bifurcation parameter window.
pub const K_MAX: f64 = 7.0;
/// Slack admitting boundary-adjacent iterates into the domain checks.
pub const DOMAIN_SLACK: f64 = 1e-15;

/// `e^{-1/2}`.
const INV_SQRT_E: f64 = 0.606_530_659_712_633_4;

/// A point `(L2, K, eps)` of the map domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDomainPoint {
    pub l2: f64,
    pub k: f64,
    pub eps: f64,
}

impl MapDomainPoint {
    pub fn new(l2: f64, k: f64, eps: f64) -> Result<Self> {
        check_k_eps(k, eps)?;
        if !(l2.abs() <= eps + DOMAIN_SLACK) {
            return Err(Error::Domain(format!("L2 = {l2} not in (-eps, eps) for eps = {eps}")));
        }
        Ok(Self { l2, k, eps })
    }
}

fn check_k_eps(k: f64, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} not in (0, 1)")));
    }
    if !(k >= K_MIN - DOMAIN_SLACK && k <= K_MAX + DOMAIN_SLACK) {
        return Err(Error::Domain(format!("K = {k} not in ({K_MIN}, {K_MAX})")));
    }
    Ok(())
}

/// Durations, junction levels and switching times of the orbit for one `(L2, K, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub theta5: f64,
    pub theta6: f64,
    /// `theta6 - 1`, evaluated without cancellation.
    pub theta6_excess: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub omega: f64,
}

impl DerivedParams {
    /// `[L1, L2, L3, L4, L5]`.
    pub fn durations(&self) -> [f64; 5] {
        [self.l1, self.l2, self.l3, self.l4, self.l5]
    }

    /// `[theta1, ..., theta6]`.
    pub fn levels(&self) -> [f64; 6] {
        [self.theta1, self.theta2, self.theta3, self.theta4, self.theta5, self.theta6]
    }
}

/// The three additive pieces of `F - L2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapTerms {
    /// `(K/eps)(K+1)(1 - (1 - L4) e^{L4})`.
    pub ramp: f64,
    pub theta3: f64,
    /// `(1+eps)(K+theta6)/(K-1) e^{-L2}`.
    pub return_level: f64,
}

/// Everything in the chain that depends on `(K, eps)` only.
///
/// Sweeps over `L2` at fixed `K` reuse one context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapContext {
    pub k: f64,
    pub eps: f64,
    /// `eps / (K - 1 - eps)`; `L3 = ln(1 + u)`.
    pub u: f64,
    pub l3: f64,
    /// `(u - ln(1+u))/u`, so that `(K/eps)(K-1-eps) L3 - K = -K q`.
    pub q: f64,
    /// `ln((K+1)/(K-1))`.
    pub log_kp_km: f64,
    /// `(1+eps)(K-1-eps)/(K-1) - 1 = eps (K-2-eps)/(K-1)`.
    pub m_minus_one: f64,
    /// `(K-1)/(K-1-eps)^{3/2}`.
    pub amp: f64,
    e3: f64,
    /// `1 - (1 + L3) e^{-L3}` and `1 - (1 + L3 + L3^2/2) e^{-L3}`.
    tail2_l3: f64,
    tail3_l3: f64,
    /// `(5/2) ln(K-1-eps) - ln(K-1) + 1/2`.
    l1_base: f64,
}

impl MapContext {
    pub fn new(k: f64, eps: f64) -> Result<Self> {
        check_k_eps(k, eps)?;
        let km1 = k - 1.0;
        let u = eps / (km1 - eps);
        let l3 = log_ratio(km1, eps);
        Ok(Self {
            k,
            eps,
            u,
            l3,
            q: log1p_defect(u),
            log_kp_km: ((k + 1.0) / km1).ln(),
            m_minus_one: eps * (k - 2.0 - eps) / km1,
            amp: km1 / (km1 - eps).powf(1.5),
            e3: (-l3).exp(),
            tail2_l3: quadratic_exp_tail(l3),
            tail3_l3: cubic_exp_tail(l3),
            l1_base: 0.5 + 2.5 * (km1 - eps).ln() - km1.ln(),
        })
    }

    fn check_l2(&self, l2: f64) -> Result<()> {
        if !(l2.abs() <= self.eps + DOMAIN_SLACK) {
            return Err(Error::Domain(format!("L2 = {l2} not in (-eps, eps) for eps = {}", self.eps)));
        }
        Ok(())
    }

    /// `theta6 - 1` as a sum of `O(eps)` pieces.
    pub fn theta6_excess(&self, l2: f64) -> f64 {
        self.m_minus_one * (-l2).exp() + em1(-l2) - self.k * self.q
    }

    /// The chain in its fixed order `L3, L5, theta4, theta5, theta6, L4, L1, theta1, theta2, theta3`.
    pub fn derive(&self, l2: f64) -> Result<DerivedParams> {
        self.check_l2(l2)?;
        let (k, eps) = (self.k, self.eps);
        let km1 = k - 1.0;
        let e2 = (-l2).exp();

        let l3 = self.l3;
        let l5 = self.log_kp_km - l2;
        let theta4 = (1.0 + eps) * (k + 1.0) / km1 * e2;
        let theta5 = (1.0 + eps) * e2;
        let d6 = self.theta6_excess(l2);
        let theta6 = 1.0 + d6;
        let k_th6 = k + theta6;
        if !(k_th6 > 0.0) {
            return Err(Error::DerivedDomain(k_th6));
        }
        let l4 = l1p(d6 / (k + 1.0));
        let l1 = self.l1_base - l2 - 1.5 * k_th6.ln();
        let b = self.amp * k_th6 * k_th6.sqrt();
        let theta1 = k - INV_SQRT_E / e2 * b;
        // (1+eps) L2 e^{-L2} + e^{-L2} - 1 = eps L2 e^{-L2} - (1 - (1+L2) e^{-L2})
        let tail2_l2 = e2 * exp_remainder(2, l2);
        let theta2 = k * e2 - INV_SQRT_E * b + k * (l2 * e2 - tail2_l2 / eps);
        let e3 = self.e3;
        // (1+eps) L3 e^{-L2-L3} + e^{-L3} - 1 = L3 e^{-L3} (theta5 - 1) - (1 - (1+L3) e^{-L3})
        let theta5_excess = eps * e2 + em1(-l2);
        let mid = (l3 * e3 * theta5_excess - self.tail2_l3) / eps;
        let theta3 = theta2 * e3 + k * mid - k * k / (eps * eps) * km1 * self.tail3_l3;

        let tau1 = l1 + l2 + l3 + l4 + l5;
        let tau2 = tau1 + l2 + l3 + l4;
        let tau3 = tau2 + l2 + l5;
        let omega = tau3 + l3;
        Ok(DerivedParams {
            l1,
            l2,
            l3,
            l4,
            l5,
            theta1,
            theta2,
            theta3,
            theta4,
            theta5,
            theta6,
            theta6_excess: d6,
            tau1,
            tau2,
            tau3,
            omega,
        })
    }

    pub fn terms_from(&self, d: &DerivedParams) -> MapTerms {
        let k = self.k;
        MapTerms {
            ramp: k / self.eps * (k + 1.0) * one_minus_one_minus_x_exp(d.l4),
            theta3: d.theta3,
            return_level: d.theta5 * (k + d.theta6) / (k - 1.0),
        }
    }

    /// `F(L2, K, eps)`.
    pub fn eval(&self, l2: f64) -> Result<f64> {
        let d = self.derive(l2)?;
        let k = self.k;
        let ramp = k / self.eps * (k + 1.0) * one_minus_one_minus_x_exp(d.l4);
        let return_level = d.theta5 * (k + d.theta6) / (k - 1.0);
        Ok(ramp + d.theta3 - return_level + l2)
    }

    /// The value of `L2` at which `theta6 = 1` and `L4 = 0`.
    pub fn l2_hat(&self) -> Result<f64> {
        // second log argument K + 1 - (K/eps)(K-1-eps) L3 equals 1 + K q
        let arg = 1.0 + self.k * self.q;
        if !(arg > 0.0) {
            return Err(Error::Domain(format!("L2_hat: log argument {arg} <= 0")));
        }
        Ok(l1p(self.m_minus_one) - l1p(self.k * self.q))
    }
}

/// Evaluates the chain for one domain point.
pub fn derive_params(pt: &MapDomainPoint) -> Result<DerivedParams> {
    MapContext::new(pt.k, pt.eps)?.derive(pt.l2)
}

/// `F(L2, K, eps)`.
#[allow(non_snake_case)]
pub fn eval_F(pt: &MapDomainPoint) -> Result<f64> {
    MapContext::new(pt.k, pt.eps)?.eval(pt.l2)
}

/// Residuals `lhs - rhs` of the ten boundary relations followed by the
/// duration constraint `2 L1 + 5 L2 + 5 L3 + 3 L4 + 3 L5 = 1`.
///
/// Only the fourth relation is not built into the chain; its residual is
/// `-e^{-L4} (F - L2)`.
#[allow(non_snake_case)]
pub fn residuals_B(pt: &MapDomainPoint) -> Result<[f64; 11]> {
    let d = derive_params(pt)?;
    let (k, eps) = (pt.k, pt.eps);
    let (l1, l2, l3, l4, l5) = (d.l1, d.l2, d.l3, d.l4, d.l5);
    let r = k / eps;
    Ok([
        d.theta1 - (k - (k - 1.0 - eps) * (-l1).exp()),
        d.theta2 - (d.theta1 * (-l2).exp() + r * ((1.0 + eps) * l2 * (-l2).exp() + em1(-l2))),
        d.theta3
            - (d.theta2 * (-l3).exp() + r * (d.theta5 * l3 * (-l3).exp() + em1(-l3))
                - r * r * (k - 1.0) * cubic_exp_tail(l3)),
        d.theta4
            - (d.theta3 * (-l4).exp() + r * ((k + d.theta6) * l4 * (-l4).exp() + (k + 1.0) * em1(-l4))),
        (1.0 + eps) - d.theta4 * (-l5).exp(),
        d.theta5 - (1.0 + eps) * (-l2).exp(),
        d.theta6 - (d.theta5 * (-l3).exp() - r * (k - 1.0) * quadratic_exp_tail(l3)),
        1.0 - ((k + d.theta6) * (-l4).exp() - k),
        -1.0 - ((k + 1.0) * (-l2 - l5).exp() - k),
        (-1.0 - eps) - ((k - 1.0) * (-l3).exp() - k),
        2.0 * l1 + 5.0 * l2 + 5.0 * l3 + 3.0 * l4 + 3.0 * l5 - 1.0,
    ])
}

/// `K - sqrt((K+1)^3 / (e (K-1)))`, the small-`eps` limit of `theta3` at `L2 = 0`.
pub fn theta_star(kbar: f64) -> Result<f64> {
    if !(kbar >= K_MIN && kbar <= K_MAX) {
        return Err(Error::Domain(format!("theta_star: K = {kbar} not in [{K_MIN}, {K_MAX}]")));
    }
    Ok(kbar - ((kbar + 1.0).powi(3) / (std::f64::consts::E * (kbar - 1.0))).sqrt())
}

/// `e - (K+1)^3 (K-1) / (K^2 - 2K - 1)^2`; its root in `(6.5, 7)` is `K0`.
pub fn w(k: f64) -> f64 {
    let d = k * k - 2.0 * k - 1.0;
    std::f64::consts::E - (k + 1.0).powi(3) * (k - 1.0) / (d * d)
}

fn w_prime(k: f64) -> f64 {
    // d/dK of (K+1)^3 (K-1) / D^2 with D = K^2 - 2K - 1
    let d = k * k - 2.0 * k - 1.0;
    let num = (k + 1.0).powi(3) * (k - 1.0);
    let dnum = 3.0 * (k + 1.0).powi(2) * (k - 1.0) + (k + 1.0).powi(3);
    -(dnum * d - 2.0 * num * (2.0 * k - 2.0)) / (d * d * d)
}

/// Result of [`solve_K0`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct K0Solution {
    pub value: f64,
    /// `w(K0)`: the defining equation divided through by `(K^2-2K-1)^2`.
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// The root of `(K-1)(K+1)^3 = e (K^2-2K-1)^2` in `(6.5, 7)`.
#[allow(non_snake_case)]
pub fn solve_K0() -> Result<K0Solution> {
    let tol = Tolerance { x_abs: 0.0, x_rel: 1e-15, ..Tolerance::default() };
    let root = safeguarded_newton(|k| Ok((w(k), w_prime(k))), K_MIN, K_MAX, 6.87, tol)?;
    Ok(K0Solution {
        value: root.x,
        residual: w(root.x),
        iterations: root.iterations,
        bracket: (K_MIN, K_MAX),
    })
}

/// `L2_hat(K, eps)`: the `L2` at which `L4 = 0`.
#[allow(non_snake_case)]
pub fn L2_hat(k: f64, eps: f64) -> Result<f64> {
    MapContext::new(k, eps)?.l2_hat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn l3_at_k7() {
        let d = derive_params(&MapDomainPoint::new(0.0, 7.0, 0.1).unwrap()).unwrap();
        // ln(6/5.9), 50-digit reference
        assert!((d.l3 / 0.016_807_118_316_381_234 - 1.0).abs() < 1e-15);
        assert!((d.theta5 - 1.1).abs() < 1e-15);
    }

    #[test]
    fn chain_times_are_cumulative() {
        let d = derive_params(&MapDomainPoint::new(2e-4, 6.87, 1e-3).unwrap()).unwrap();
        let sum: f64 = d.durations().iter().sum();
        assert_eq!(d.tau1, sum);
        assert_eq!(d.tau2, d.tau1 + d.l2 + d.l3 + d.l4);
        assert_eq!(d.tau3, d.tau2 + d.l2 + d.l5);
        assert_eq!(d.omega, d.tau3 + d.l3);
        assert!(d.l3 > 0.0);
        assert!(6.87 + d.theta6 > 0.0);
    }

    #[test]
    fn domain_rejections() {
        assert!(MapDomainPoint::new(0.0, 6.4, 1e-3).is_err());
        assert!(MapDomainPoint::new(0.0, 7.1, 1e-3).is_err());
        assert!(MapDomainPoint::new(2e-3, 6.8, 1e-3).is_err());
        assert!(MapDomainPoint::new(0.0, 6.8, 1.0).is_err());
        assert!(MapDomainPoint::new(0.0, 6.5, 1e-3).is_ok());
        assert!(MapDomainPoint::new(-1e-3, 7.0, 1e-3).is_ok());
        assert!(theta_star(6.49).is_err());
    }

    #[test]
    fn l2_hat_zeroes_l4() {
        for &eps in &[1e-2, 1e-3, 1e-4] {
            let lh = L2_hat(6.87, eps).unwrap();
            assert!(lh > 0.0 && lh < eps);
            let d = derive_params(&MapDomainPoint::new(lh, 6.87, eps).unwrap()).unwrap();
            assert!(d.l4.abs() < 1e-12, "L4 = {}", d.l4);
            assert!((d.theta6 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn w_exact_values() {
        assert!((w(6.5) - (std::f64::consts::E - 37125.0 / 12769.0)).abs() < 1e-15);
        assert!((w(7.0) - (std::f64::consts::E - 768.0 / 289.0)).abs() < 1e-15);
        assert!(w(6.5) < 0.0 && w(7.0) > 0.0);
    }

    #[test]
    fn w_prime_matches_difference_quotient() {
        for &k in &[6.5, 6.87, 7.0] {
            let h = 1e-6;
            let fd = (w(k + h) - w(k - h)) / (2.0 * h);
            assert!((fd - w_prime(k)).abs() < 1e-8);
        }
    }

    #[test]
    fn k0_restates_theta_star_identity() {
        let k0 = solve_K0().unwrap();
        assert!(k0.residual.abs() <= 1e-12);
        let t = theta_star(k0.value).unwrap();
        assert!((t - (k0.value + 1.0) / (k0.value - 1.0)).abs() < 1e-12);
        assert!(((15.0f64 / 11.0).powi(3) - (2.0 + 713.0 / 1331.0)).abs() < 1e-15);
    }

    #[test]
    fn theta_star_above_one() {
        for i in 0..=100 {
            let k = K_MIN + (K_MAX - K_MIN) * i as f64 / 100.0;
            assert!(theta_star(k).unwrap() > 1.0);
        }
    }

    #[test]
    fn b4_residual_is_scaled_map_defect() {
        let pt = MapDomainPoint::new(3e-4, 6.9, 1e-3).unwrap();
        let r = residuals_B(&pt).unwrap();
        let d = derive_params(&pt).unwrap();
        let f = eval_F(&pt).unwrap();
        assert!((r[3] + (-d.l4).exp() * (f - pt.l2)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn built_in_relations_vanish(x in -0.99f64..0.99, k in 6.51f64..6.99, le in -4.0f64..-2.0) {
            let eps = 10f64.powf(le);
            let pt = MapDomainPoint::new(x * eps, k, eps).unwrap();
            let r = residuals_B(&pt).unwrap();
            for (i, v) in r.iter().enumerate() {
                if i != 3 {
                    prop_assert!(v.abs() < 1e-11, "relation {} residual {}", i + 1, v);
                }
            }
        }

        #[test]
        fn theta6_and_l4_decrease_in_l2(a in -0.99f64..0.99, b in -0.99f64..0.99, k in 6.51f64..6.99) {
            prop_assume!((a - b).abs() > 1e-6);
            let eps = 1e-3;
            let ctx = MapContext::new(k, eps).unwrap();
            let (lo, hi) = if a < b { (a * eps, b * eps) } else { (b * eps, a * eps) };
            let (dl, dh) = (ctx.derive(lo).unwrap(), ctx.derive(hi).unwrap());
            prop_assert!(dl.theta6 > dh.theta6);
            prop_assert!(dl.l4 > dh.l4);
        }

        #[test]
        fn theta6_within_five_eps(x in -0.99f64..0.99, k in 6.51f64..6.99, le in -4.0f64..-2.0) {
            let eps = 10f64.powf(le);
            let d = derive_params(&MapDomainPoint::new(x * eps, k, eps).unwrap()).unwrap();
            prop_assert!((d.theta6 - 1.0).abs() <= 5.0 * eps);
        }
    }
}

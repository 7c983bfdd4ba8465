//! Analytic first and second partial derivatives of `F`, with a
//! finite-difference cross-check.
//!
//! `F - L2` is split as `ramp + theta3 - return_level` (see [`MapTerms`]) and
//! each piece is differentiated through the chain by hand.
//!
//! [`MapTerms`]: crate::reduced_map::MapTerms

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cubic_exp_tail, em1, one_minus_one_minus_x_exp, quadratic_exp_tail};
use crate::reduced_map::{MapContext, MapDomainPoint, DOMAIN_SLACK, K_MAX, K_MIN};

/// `F` with `dF/dK`, `dF/dL2` and `d2F/dL2^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapJet {
    pub f: f64,
    pub df_dk: f64,
    pub df_dl2: f64,
    pub d2f_dl2sq: f64,
}

/// Chain-level slopes in `L2`, exposed for identity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSlopes {
    pub theta6_l2: f64,
    pub theta6_l2l2: f64,
    pub l4_l2: f64,
    pub theta3_l2: f64,
    pub theta3_l2l2: f64,
    pub theta6_k: f64,
    pub l3_k: f64,
    pub l4_k: f64,
    pub theta2_k: f64,
    pub theta3_k: f64,
}

impl MapContext {
    /// `F` and its derivatives at `L2`, with the chain slopes used to build them.
    pub fn jet_with_slopes(&self, l2: f64) -> Result<(MapJet, ChainSlopes)> {
        let d = self.derive(l2)?;
        let t = self.terms_from(&d);
        let (k, eps) = (self.k, self.eps);
        let km1 = k - 1.0;
        let km1e = km1 - eps;
        let e2 = (-l2).exp();
        let e3 = (-d.l3).exp();
        let k_th6 = k + d.theta6;
        let r = k / eps;
        let m = 1.0 + self.m_minus_one;

        // derivatives in L2
        let th6 = -m * e2;
        let th6_2 = -th6;
        let l4_ = th6 / k_th6;
        let ramp_ = r * d.l4 * th6;
        let ramp_2 = r * th6 * (th6 / k_th6 - d.l4);
        let pre = 1.5 * (1.0 + eps) / km1e.sqrt() * (-l2 - d.l3 - 0.5).exp();
        let e23 = (-l2 - d.l3).exp();
        let th3 = pre * k_th6.sqrt() - r * (1.0 + eps) * (l2 + d.l3) * e23;
        let th3_2 = pre * (th6 / (2.0 * k_th6.sqrt()) - k_th6.sqrt())
            - r * (1.0 + eps) * (1.0 - l2 - d.l3) * e23;
        let c3 = (1.0 + eps) / km1 * e2;
        let ret_ = c3 * (th6 - k_th6);
        let ret_2 = c3 * (k_th6 - 3.0 * th6);

        // derivatives in K
        let l3_k = -eps / (km1 * km1e);
        let th6_k = eps * (1.0 + eps) * e2 / (km1 * km1) + eps * k / (km1 * km1e)
            - (2.0 * k - 1.0 - eps) * self.q / km1e;
        let l4_k = (th6_k * (k + 1.0) - d.theta6_excess) / (k_th6 * (k + 1.0));
        let ramp_k = (2.0 * k + 1.0) / eps * one_minus_one_minus_x_exp(d.l4)
            + k * (k + 1.0) / eps * d.l4 * d.l4.exp() * l4_k;
        let s = k_th6.sqrt();
        let db = s * s * s / km1e.powf(1.5) + 1.5 * km1 * s * (1.0 + th6_k) / km1e.powf(1.5)
            - 1.5 * km1 * s * s * s / km1e.powf(2.5);
        let th2_k = e2 + (l2 * e2 - quadratic_exp_tail(l2) / eps) - (-0.5f64).exp() * db;
        let theta5_excess = eps * e2 + em1(-l2);
        let a = d.l3 * e3 * theta5_excess - quadratic_exp_tail(d.l3);
        let a_k = (theta5_excess - d.theta5 * d.l3) * e3 * l3_k;
        let th3_k = th2_k * e3 - d.theta2 * e3 * l3_k + a / eps + r * a_k
            - (3.0 * k * k - 2.0 * k) / (eps * eps) * cubic_exp_tail(d.l3)
            + k * k * d.l3 * d.l3 * e3 / (2.0 * eps * km1e);
        let ret_k = c3 * (1.0 + th6_k - k_th6 / km1);

        let jet = MapJet {
            f: t.ramp + t.theta3 - t.return_level + l2,
            df_dk: ramp_k + th3_k - ret_k,
            df_dl2: ramp_ + th3 - ret_ + 1.0,
            d2f_dl2sq: ramp_2 + th3_2 - ret_2,
        };
        let slopes = ChainSlopes {
            theta6_l2: th6,
            theta6_l2l2: th6_2,
            l4_l2: l4_,
            theta3_l2: th3,
            theta3_l2l2: th3_2,
            theta6_k: th6_k,
            l3_k,
            l4_k,
            theta2_k: th2_k,
            theta3_k: th3_k,
        };
        Ok((jet, slopes))
    }

    pub fn jet(&self, l2: f64) -> Result<MapJet> {
        Ok(self.jet_with_slopes(l2)?.0)
    }
}

/// `F` and its derivatives at a domain point.
pub fn jet(pt: &MapDomainPoint) -> Result<MapJet> {
    MapContext::new(pt.k, pt.eps)?.jet(pt.l2)
}

/// Step sizes for [`fd_check_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSteps {
    pub dk: f64,
    pub dl2: f64,
    /// Step of the three-point second difference in `L2`.
    pub dl2_second: f64,
}

impl FdSteps {
    /// First-difference steps `h eps`, second-difference step `h^{2/3} eps`.
    pub fn scaled(h: f64, eps: f64) -> Self {
        Self { dk: h * eps, dl2: h * eps, dl2_second: h.powf(2.0 / 3.0) * eps }
    }
}

/// Relative discrepancies between central differences and the analytic jet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub rel_df_dk: f64,
    pub rel_df_dl2: f64,
    pub rel_d2f_dl2sq: f64,
    pub analytic: MapJet,
    pub fd_df_dk: f64,
    pub fd_df_dl2: f64,
    pub fd_d2f_dl2sq: f64,
}

impl FdReport {
    pub fn max_first_order(&self) -> f64 {
        self.rel_df_dk.max(self.rel_df_dl2)
    }
}

fn rel(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / an.abs().max(f64::MIN_POSITIVE)
}

/// [`fd_check_with`] using [`FdSteps::scaled`].
pub fn fd_check(pt: &MapDomainPoint, h: f64) -> Result<FdReport> {
    fd_check_with(pt, FdSteps::scaled(h, pt.eps))
}

/// Central differences of `F` in `K` and `L2` against [`jet`].
pub fn fd_check_with(pt: &MapDomainPoint, steps: FdSteps) -> Result<FdReport> {
    let reach = steps.dl2.max(steps.dl2_second);
    if pt.l2.abs() + reach > pt.eps + DOMAIN_SLACK {
        return Err(Error::Domain(format!(
            "finite-difference stencil L2 = {} +- {reach} leaves (-eps, eps)",
            pt.l2
        )));
    }
    if pt.k - steps.dk < K_MIN || pt.k + steps.dk > K_MAX {
        return Err(Error::Domain(format!(
            "finite-difference stencil K = {} +- {} leaves ({K_MIN}, {K_MAX})",
            pt.k, steps.dk
        )));
    }
    let ctx = MapContext::new(pt.k, pt.eps)?;
    let analytic = ctx.jet(pt.l2)?;
    let f = |l2: f64| ctx.eval(l2);
    let fk = |k: f64| MapContext::new(k, pt.eps)?.eval(pt.l2);

    let fd_df_dk = (fk(pt.k + steps.dk)? - fk(pt.k - steps.dk)?) / (2.0 * steps.dk);
    let fd_df_dl2 = (f(pt.l2 + steps.dl2)? - f(pt.l2 - steps.dl2)?) / (2.0 * steps.dl2);
    let h2 = steps.dl2_second;
    let fd_d2f_dl2sq =
        (f(pt.l2 + h2)? - 2.0 * analytic.f + f(pt.l2 - h2)?) / (h2 * h2);
    Ok(FdReport {
        rel_df_dk: rel(fd_df_dk, analytic.df_dk),
        rel_df_dl2: rel(fd_df_dl2, analytic.df_dl2),
        rel_d2f_dl2sq: rel(fd_d2f_dl2sq, analytic.d2f_dl2sq),
        analytic,
        fd_df_dk,
        fd_df_dl2,
        fd_d2f_dl2sq,
    })
}

//! Fixed points of `F`, the implicit parameter curve `K = phi(L2)` and the fold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduced_map::{MapContext, K_MAX, K_MIN};
use crate::roots::{brent, safeguarded_newton, Tolerance};

/// Defect tolerance for `|F(L2, phi(L2)) - L2|`.
pub const PHI_TOL: f64 = 1e-12;
/// Tolerance on `dF/dL2 - 1` at the fold.
pub const FOLD_SLOPE_TOL: f64 = 1e-10;

/// The saddle-node point with its non-degeneracy diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub l2_star: f64,
    pub k_star: f64,
    pub eps: f64,
    /// `F(L2*, K*) - L2*`.
    pub f_residual: f64,
    pub dfdl2_minus_1: f64,
    pub dfdk: f64,
    pub d2fdl2sq: f64,
    /// `L2_hat(K*, eps)`.
    pub l2_hat: f64,
    /// `dF/dL2 - 1` along the curve at `L2 = 0` and `L2 = L2_hat`.
    pub slope_gap_at_zero: f64,
    pub slope_gap_at_hat: f64,
}

impl BifurcationPoint {
    /// `d2F/dL2^2 / dF/dK`; negative means fixed points exist for `K > K*`.
    pub fn sign_ratio(&self) -> f64 {
        self.d2fdl2sq / self.dfdk
    }

    /// Names of the failed saddle-node conditions; empty when all hold.
    pub fn failed_conditions(&self) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if !(self.f_residual.abs() <= PHI_TOL) {
            bad.push("F = L2");
        }
        if !(self.dfdl2_minus_1.abs() <= FOLD_SLOPE_TOL) {
            bad.push("dF/dL2 = 1");
        }
        if !(self.dfdk > 0.0) {
            bad.push("dF/dK > 0");
        }
        if !(self.d2fdl2sq < 0.0) {
            bad.push("d2F/dL2^2 < 0");
        }
        if !(self.sign_ratio() < 0.0) {
            bad.push("sign ratio < 0");
        }
        if !(self.l2_star > 0.0 && self.l2_star < self.l2_hat) {
            bad.push("0 < L2* < L2_hat");
        }
        bad
    }
}

/// Solves `F(L2, K, eps) = L2` for `K` in `(6.5, 7)`.
///
/// Newton in `K` on the sign-change bracket `[6.5, 7]`, falling back to bisection.
pub fn solve_phi(l2: f64, eps: f64, k_guess: f64) -> Result<f64> {
    let g = |k: f64| -> Result<(f64, f64)> {
        let j = MapContext::new(k, eps)?.jet(l2)?;
        Ok((j.f - l2, j.df_dk))
    };
    let tol = Tolerance { x_abs: 0.0, x_rel: 2.0 * f64::EPSILON, f_abs: 0.0, max_iter: 100 };
    let root = safeguarded_newton(g, K_MIN, K_MAX, k_guess, tol)?;
    if !(root.fx.abs() <= PHI_TOL) {
        return Err(Error::Certification(format!(
            "phi({l2}) = {}: defect {:e} above {PHI_TOL:e}",
            root.x, root.fx
        )));
    }
    Ok(root.x)
}

/// `dF/dL2 - 1` along the curve `K = phi(L2)`, with the solved `K`.
pub fn slope_gap(l2: f64, eps: f64, k_guess: f64) -> Result<(f64, f64)> {
    let k = solve_phi(l2, eps, k_guess)?;
    Ok((MapContext::new(k, eps)?.jet(l2)?.df_dl2 - 1.0, k))
}

/// The `L2_hat` consistent with the curve: `L = L2_hat(phi(L), eps)`.
pub fn l2_hat_on_curve(eps: f64) -> Result<(f64, f64)> {
    let mut k = solve_phi(0.0, eps, 6.87)?;
    let mut l = MapContext::new(k, eps)?.l2_hat()?;
    for _ in 0..60 {
        k = solve_phi(l, eps, k)?;
        let next = MapContext::new(k, eps)?.l2_hat()?;
        let done = (next - l).abs() <= 1e-16 * l.abs().max(f64::MIN_POSITIVE);
        l = next;
        if done {
            return Ok((l, k));
        }
    }
    Ok((l, k))
}

/// Locates `L2*` in `(0, L2_hat)` where `dF/dL2 = 1` along `K = phi(L2)`, and
/// certifies the saddle-node conditions there.
pub fn locate_fold(eps: f64) -> Result<BifurcationPoint> {
    let (hat, k_hat) = l2_hat_on_curve(eps)?;
    let (g0, k0) = slope_gap(0.0, eps, 6.87)?;
    let (g_hat, _) = slope_gap(hat, eps, k_hat)?;
    if !(g0 > 0.0 && g_hat < 0.0) {
        return Err(Error::NoBracket { lo: 0.0, hi: hat, f_lo: g0, f_hi: g_hat });
    }
    let mut k_warm = k0;
    let tol = Tolerance { x_abs: 0.0, x_rel: 2.0 * f64::EPSILON, f_abs: 0.0, max_iter: 200 };
    let root = brent(
        |l2| {
            let (g, k) = slope_gap(l2, eps, k_warm)?;
            k_warm = k;
            Ok(g)
        },
        0.0,
        hat,
        tol,
    )?;
    let l2_star = root.x;
    let k_star = solve_phi(l2_star, eps, k_warm)?;
    let ctx = MapContext::new(k_star, eps)?;
    let j = ctx.jet(l2_star)?;
    let point = BifurcationPoint {
        l2_star,
        k_star,
        eps,
        f_residual: j.f - l2_star,
        dfdl2_minus_1: j.df_dl2 - 1.0,
        dfdk: j.df_dk,
        d2fdl2sq: j.d2f_dl2sq,
        l2_hat: ctx.l2_hat()?,
        slope_gap_at_zero: g0,
        slope_gap_at_hat: g_hat,
    };
    let bad = point.failed_conditions();
    if !bad.is_empty() {
        return Err(Error::Certification(format!("fold at eps = {eps}: failed {}", bad.join(", "))));
    }
    Ok(point)
}

/// Fixed-point count classification at one `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    None,
    /// A tangent root: `F - id` touches zero without changing sign.
    Fold,
    /// One transversal root; the partner has left the scanned interval.
    Single,
    Pair,
}

/// Fixed points of `F(., K, eps)` found by the scan at one `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub k: f64,
    /// Sorted ascending.
    pub fixed_points: Vec<f64>,
    pub classification: Classification,
    /// Whether each root lies in `(0, L2_hat(K, eps))`, where an orbit exists.
    pub in_v: Vec<bool>,
    /// `F - L2` at each root.
    pub defects: Vec<f64>,
    /// Maximum of `F - L2` over the scan grid and where it was attained.
    pub max_defect: f64,
    pub argmax: f64,
    pub l2_hat: f64,
}

/// Resolution and tolerances of the fixed-point scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub min_points: usize,
    pub max_points: usize,
    /// Target grid spacing.
    pub spacing: f64,
    /// `|max (F - id)|` below this with no sign change counts as a tangent root.
    pub tangent_tol: f64,
    /// Scan the full map domain `(-eps, eps)` rather than `(0, L2_hat)`.
    pub full_domain: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { min_points: 10_000, max_points: 1_000_000, spacing: 1e-9, tangent_tol: 1e-10, full_domain: true }
    }
}

impl ScanOptions {
    pub fn points_for(&self, width: f64) -> usize {
        let wanted = (width / self.spacing).ceil();
        let wanted = if wanted.is_finite() { wanted as usize } else { self.max_points };
        wanted.min(self.max_points).max(self.min_points)
    }
}

/// Scans `F(., K, eps) - L2` for sign changes and polishes each root.
pub fn scan_fixed_points(k: f64, eps: f64, opts: &ScanOptions) -> Result<BranchPoint> {
    let ctx = MapContext::new(k, eps)?;
    let hat = ctx.l2_hat()?;
    let (lo, hi) = if opts.full_domain { (-eps, eps) } else { (0.0, hat) };
    let n = opts.points_for(hi - lo);
    let step = (hi - lo) / n as f64;
    // interior nodes only: the domain is open
    let node = |i: usize| lo + step * i as f64;
    let defect = |x: f64| ctx.eval(x).map(|f| f - x);

    let mut roots = Vec::new();
    let mut prev_x = node(1);
    let mut prev = defect(prev_x)?;
    let (mut max_defect, mut argmax) = (prev, prev_x);
    for i in 2..n {
        let x = node(i);
        let d = defect(x)?;
        if d > max_defect {
            max_defect = d;
            argmax = x;
        }
        if d == 0.0 {
            roots.push(x);
        } else if prev != 0.0 && (prev < 0.0) != (d < 0.0) {
            let tol = Tolerance { x_abs: 0.0, x_rel: 2.0 * f64::EPSILON, f_abs: 0.0, max_iter: 200 };
            roots.push(brent(defect, prev_x, x, tol)?.x);
        }
        prev_x = x;
        prev = d;
    }
    // rounding noise can split a tangent root into a close pair
    if roots.len() == 2 && max_defect.abs() <= opts.tangent_tol {
        roots.clear();
    }
    let classification = match roots.len() {
        0 if max_defect.abs() <= opts.tangent_tol => {
            roots.push(argmax);
            Classification::Fold
        }
        0 => Classification::None,
        1 => Classification::Single,
        2 => Classification::Pair,
        m => {
            return Err(Error::Certification(format!(
                "K = {k}: {m} sign changes of F - id; expected at most two"
            )))
        }
    };
    let defects = roots.iter().map(|&x| defect(x)).collect::<Result<Vec<_>>>()?;
    Ok(BranchPoint {
        k,
        in_v: roots.iter().map(|&x| x > 0.0 && x < hat).collect(),
        fixed_points: roots,
        classification,
        defects,
        max_defect,
        argmax,
        l2_hat: hat,
    })
}

/// Fixed points of `F` on an evenly spaced `K` grid, in parallel over `K`.
pub fn sweep_branch(eps: f64, k_lo: f64, k_hi: f64, n: usize) -> Result<Vec<BranchPoint>> {
    sweep_branch_with(eps, k_lo, k_hi, n, &ScanOptions::default())
}

pub fn sweep_branch_with(eps: f64, k_lo: f64, k_hi: f64, n: usize, opts: &ScanOptions) -> Result<Vec<BranchPoint>> {
    if n < 2 || !(k_lo < k_hi) || k_lo <= K_MIN || k_hi >= K_MAX {
        return Err(Error::Domain(format!(
            "sweep grid [{k_lo}, {k_hi}] x {n} must satisfy 6.5 < lo < hi < 7, n >= 2"
        )));
    }
    let ks: Vec<f64> = (0..n).map(|i| k_lo + (k_hi - k_lo) * i as f64 / (n - 1) as f64).collect();
    ks.par_iter().map(|&k| scan_fixed_points(k, eps, opts)).collect()
}

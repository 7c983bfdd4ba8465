//! The fixed-point scan against a plain dense sign-change search.

use delayfold::bifurcation::{locate_fold, scan_fixed_points, sweep_branch, Classification, ScanOptions};
use delayfold::reduced_map::{residuals_B, MapContext, MapDomainPoint};
use proptest::prelude::*;

const EPS: f64 = 1e-3;

/// Sign changes of `F - id` on a uniform grid over `(0, L2_hat)`, located by
/// linear interpolation.
fn brute_force_roots(k: f64, eps: f64, n: usize) -> Vec<f64> {
    let ctx = MapContext::new(k, eps).unwrap();
    let hat = ctx.l2_hat().unwrap();
    let h = hat / n as f64;
    let g = |x: f64| ctx.eval(x).unwrap() - x;
    let mut roots = Vec::new();
    let (mut x0, mut g0) = (h, g(h));
    for i in 2..n {
        let x1 = h * i as f64;
        let g1 = g(x1);
        if (g0 < 0.0) != (g1 < 0.0) {
            roots.push(x0 - g0 * (x1 - x0) / (g1 - g0));
        }
        x0 = x1;
        g0 = g1;
    }
    roots
}

#[test]
fn scan_agrees_with_dense_search() {
    let k_star = locate_fold(EPS).unwrap().k_star;
    for k in [k_star - 1e-4, k_star + 1e-6, k_star + 1e-5, k_star + 5e-5, 6.9] {
        let bp = scan_fixed_points(k, EPS, &ScanOptions::default()).unwrap();
        let solver: Vec<f64> = bp.fixed_points.iter().zip(&bp.in_v).filter(|(_, &v)| v).map(|(&x, _)| x).collect();
        let oracle = brute_force_roots(k, EPS, 100_000);
        assert_eq!(solver.len(), oracle.len(), "K = {k}: {solver:?} vs {oracle:?}");
        for (a, b) in solver.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "K = {k}: {a} vs {b}");
        }
    }
}

#[test]
fn reported_roots_are_certified() {
    let k_star = locate_fold(EPS).unwrap().k_star;
    for k in [k_star + 1e-5, k_star + 1e-4, k_star + 1e-3] {
        let bp = scan_fixed_points(k, EPS, &ScanOptions::default()).unwrap();
        assert_eq!(bp.classification, Classification::Pair);
        let ctx = MapContext::new(k, EPS).unwrap();
        for (&x, &d) in bp.fixed_points.iter().zip(&bp.defects) {
            assert!(d.abs() <= 1e-12);
            let g = |x: f64| ctx.eval(x).unwrap() - x;
            assert!(g(x - 1e-8) * g(x + 1e-8) < 0.0, "no sign change around {x}");
            if x > 0.0 && x < bp.l2_hat {
                let r = residuals_B(&MapDomainPoint::new(x, k, EPS).unwrap()).unwrap();
                assert!(r.iter().all(|v| v.abs() <= 1e-10), "{r:?}");
            }
        }
    }
}

#[test]
fn fold_is_a_tangent_root() {
    let b = locate_fold(EPS).unwrap();
    let bp = scan_fixed_points(b.k_star, EPS, &ScanOptions::default()).unwrap();
    assert_eq!(bp.classification, Classification::Fold);
    assert!(bp.max_defect.abs() <= 1e-10);
    assert!((bp.argmax - b.l2_star).abs() <= 1e-6);
}

#[test]
fn counts_straddle_the_fold() {
    let k_star = locate_fold(EPS).unwrap().k_star;
    assert_eq!(scan_fixed_points(k_star - 1e-4, EPS, &ScanOptions::default()).unwrap().classification, Classification::None);
    assert_eq!(scan_fixed_points(k_star + 1e-4, EPS, &ScanOptions::default()).unwrap().classification, Classification::Pair);
}

#[test]
fn sweep_rejects_bad_grids() {
    assert!(sweep_branch(EPS, 6.4, 6.9, 5).is_err());
    assert!(sweep_branch(EPS, 6.8, 6.7, 5).is_err());
    assert!(sweep_branch(EPS, 6.8, 6.9, 1).is_err());
    assert!(sweep_branch(EPS, 6.8, 7.0, 5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pairs_straddle_the_fold_point(dk in 1e-6f64..1e-3) {
        let b = locate_fold(EPS).unwrap();
        let bp = scan_fixed_points(b.k_star + dk, EPS, &ScanOptions::default()).unwrap();
        prop_assert_eq!(bp.classification, Classification::Pair);
        let (lo, hi) = (bp.fixed_points[0], bp.fixed_points[1]);
        prop_assert!(lo < b.l2_star && b.l2_star < hi);
        // normal form: half-gap about sqrt(2 F_K dk / |F_LL|)
        let predicted = (2.0 * b.dfdk * dk / -b.d2fdl2sq).sqrt();
        prop_assert!(((hi - lo) / 2.0 / predicted - 1.0).abs() < 0.2);
    }

    #[test]
    fn no_roots_below_the_fold(dk in 1e-6f64..1e-3) {
        let b = locate_fold(EPS).unwrap();
        let bp = scan_fixed_points(b.k_star - dk, EPS, &ScanOptions::default()).unwrap();
        prop_assert_eq!(bp.classification, Classification::None);
        prop_assert!(bp.max_defect < 0.0);
    }
}

//! Reconstruction of the periodic orbit from a fixed point of `F`.
//!
//! On `[-1, -1 + omega]` the orbit is the concatenation of ten segments
//! `y1..y10`; the second half-period is the sign-flipped copy, and the whole is
//! extended `2 omega`-periodically.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::em1;
use crate::reduced_map::{derive_params, eval_F, DerivedParams, MapContext, MapDomainPoint};
use crate::segment::ExpPolySegment;

/// Absolute tolerance for continuity at joins.
pub const JOIN_TOL: f64 = 1e-12;
/// Endpoint tolerance for the boundary values of each segment.
pub const ENDPOINT_TOL: f64 = 1e-10;
/// Tolerance on the duration constraint.
pub const DURATION_TOL: f64 = 1e-12;
/// `|F - L2|` accepted as a fixed point by [`assemble_profile`].
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Durations of `y1..y10` in terms of `L1..L5`.
fn lengths(d: &DerivedParams) -> [f64; 10] {
    [d.l1, d.l2, d.l3, d.l4, d.l5, d.l2, d.l3, d.l4, d.l2 + d.l5, d.l3]
}

/// Whether `L2` lies in `(0, L2_hat(K, eps))`, where all durations are positive.
pub fn in_v(pt: &MapDomainPoint) -> Result<bool> {
    let hat = MapContext::new(pt.k, pt.eps)?.l2_hat()?;
    Ok(pt.l2 > 0.0 && pt.l2 < hat)
}

fn require_v(pt: &MapDomainPoint) -> Result<DerivedParams> {
    let d = derive_params(pt)?;
    if !(pt.l2 > 0.0) {
        return Err(Error::OutsideV(format!("L2 = {:e} <= 0", pt.l2)));
    }
    if !(d.l4 > 0.0) {
        return Err(Error::OutsideV(format!("L4 = {:e} <= 0 at L2 = {:e}", d.l4, pt.l2)));
    }
    Ok(d)
}

fn segments_from(pt: &MapDomainPoint, d: &DerivedParams) -> Vec<ExpPolySegment> {
    let (k, eps) = (pt.k, pt.eps);
    let r = k / eps;
    let len = lengths(d);
    let theta5_excess = eps * (-d.l2).exp() + em1(-d.l2);
    let ramp_c = -r * (k - 1.0);
    vec![
        ExpPolySegment::new(len[0], k, 1.0 + eps, k, 0.5 * k),
        ExpPolySegment::new(len[1], -r, d.theta1, k, -0.5 * r),
        ExpPolySegment::new(len[2], -r - r * r * (k - 1.0), d.theta2, r * theta5_excess, -0.5 * r),
        ExpPolySegment::new(len[3], -r * (k + 1.0), d.theta3, r * d.theta6_excess, -0.5 * r * (k + 1.0)),
        ExpPolySegment::new(len[4], 0.0, d.theta4, 0.0, 0.0),
        ExpPolySegment::new(len[5], 0.0, 1.0 + eps, 0.0, 0.0),
        ExpPolySegment::new(len[6], ramp_c, d.theta5, 0.0, 0.5 * ramp_c),
        ExpPolySegment::new(len[7], -k, d.theta6, -k, -0.5 * k),
        ExpPolySegment::new(len[8], -k, 1.0, -k, -0.5 * k),
        ExpPolySegment::new(len[9], -k, -1.0, -k, -0.5 * k),
    ]
}

/// The ten segments `y1..y10` of the orbit.
pub fn build_segments(pt: &MapDomainPoint) -> Result<Vec<ExpPolySegment>> {
    let d = require_v(pt)?;
    Ok(segments_from(pt, &d))
}

/// One piece of the profile: `sign * seg(t - offset)` on `[offset, offset + seg.length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePiece {
    pub offset: f64,
    pub seg: ExpPolySegment,
    pub sign: f64,
}

impl ProfilePiece {
    pub fn eval(&self, t: f64) -> f64 {
        self.sign * self.seg.eval(t - self.offset)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.sign * self.seg.deriv(t - self.offset)
    }

    pub fn end(&self) -> f64 {
        self.offset + self.seg.length
    }
}

/// The orbit on `[-1, -1 + 2 omega]`, extended periodically by [`PeriodicProfile::evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicProfile {
    /// Twenty pieces: `y1..y10`, then `-y1..-y10` shifted by `omega`.
    pub segments: Vec<ProfilePiece>,
    pub omega: f64,
    pub eps: f64,
    pub k: f64,
    pub l2: f64,
    pub derived: DerivedParams,
}

impl PeriodicProfile {
    pub fn period(&self) -> f64 {
        2.0 * self.omega
    }

    /// Index of the piece containing `t`, after reduction to `[-1, -1 + 2 omega)`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let period = self.period();
        let s = (t + 1.0).rem_euclid(period) - 1.0;
        let i = self.segments.partition_point(|p| p.offset <= s);
        (i.saturating_sub(1), s)
    }

    /// `p(t)` for any real `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        self.segments[i].eval(s)
    }

    /// `p'(t)`, one-sided from the right at joins.
    pub fn derivative(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        self.segments[i].deriv(s)
    }

    /// `(offset, left value - right value)` at each interior join and at the wrap-around.
    pub fn join_jumps(&self) -> Vec<(f64, f64)> {
        let n = self.segments.len();
        (0..n)
            .map(|i| {
                let a = &self.segments[i];
                let b = &self.segments[(i + 1) % n];
                let left = a.sign * a.seg.end_value();
                let right = b.sign * b.seg.eval(0.0);
                (a.end(), left - right)
            })
            .collect()
    }

    pub fn max_join_jump(&self) -> f64 {
        self.join_jumps().iter().fold(0.0f64, |m, &(_, j)| m.max(j.abs()))
    }

    /// Times of the local maxima and minima over one period, from the monotone
    /// runs of the pieces.
    pub fn extrema(&self) -> (Vec<f64>, Vec<f64>) {
        let mut runs: Vec<(f64, i8)> = Vec::new();
        for p in &self.segments {
            for w in p.seg.monotone_breaks().windows(2) {
                if w[1] - w[0] < 1e-14 {
                    continue;
                }
                let rise = p.sign * (p.seg.eval(w[1]) - p.seg.eval(w[0]));
                let s = if rise > 0.0 { 1 } else if rise < 0.0 { -1 } else { 0 };
                if s != 0 && runs.last().map_or(true, |r| r.1 != s) {
                    runs.push((p.offset + w[0], s));
                }
            }
        }
        if runs.len() > 1 && runs[0].1 == runs[runs.len() - 1].1 {
            runs.remove(0);
        }
        let (mut maxima, mut minima) = (Vec::new(), Vec::new());
        for (i, &(t, s)) in runs.iter().enumerate() {
            let prev = runs[(i + runs.len() - 1) % runs.len()].1;
            if prev > 0 && s < 0 {
                maxima.push(t);
            } else if prev < 0 && s > 0 {
                minima.push(t);
            }
        }
        (maxima, minima)
    }

    /// `n` samples `(t, p(t))` evenly spaced over `[-1, -1 + 2 omega)`.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let period = self.period();
        (0..n)
            .map(|i| {
                let t = -1.0 + period * i as f64 / n as f64;
                (t, self.evaluate(t))
            })
            .collect()
    }

    /// CSV with header `t,p` and `n` rows.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("t,p\n");
        for (t, p) in self.sample(n) {
            let _ = writeln!(out, "{t:.16e},{p:.16e}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidHistory(e.to_string()))
    }
}

/// `d` with `L5` re-solved from `2L1 + 5L2 + 5L3 + 3L4 + 3L5 = 1` and the
/// schedule recomputed. At a fixed point this moves `L5` by a few ulps, but the
/// period then matches the delay to rounding; otherwise the ramp slope `K/eps`
/// turns the leftover timing defect into a residual near `1e-10`.
fn close_period(mut d: DerivedParams) -> DerivedParams {
    d.l5 = (1.0 - 2.0 * d.l1 - 5.0 * (d.l2 + d.l3) - 3.0 * d.l4) / 3.0;
    d.tau1 = d.l1 + d.l2 + d.l3 + d.l4 + d.l5;
    d.tau2 = d.tau1 + d.l2 + d.l3 + d.l4;
    d.tau3 = d.tau2 + d.l2 + d.l5;
    d.omega = d.tau3 + d.l3;
    d
}

fn profile_from(pt: &MapDomainPoint, d: DerivedParams) -> PeriodicProfile {
    let segs = segments_from(pt, &d);
    let mut pieces = Vec::with_capacity(20);
    let mut offset = -1.0;
    for seg in &segs {
        pieces.push(ProfilePiece { offset, seg: *seg, sign: 1.0 });
        offset += seg.length;
    }
    for i in 0..10 {
        let p = pieces[i];
        pieces.push(ProfilePiece { offset: p.offset + d.omega, seg: p.seg, sign: -1.0 });
    }
    PeriodicProfile { segments: pieces, omega: d.omega, eps: pt.eps, k: pt.k, l2: pt.l2, derived: d }
}

/// The periodic orbit for a fixed point of `F` in `V`, certified by
/// [`check_hypotheses`] and join continuity.
pub fn assemble_profile(pt: &MapDomainPoint) -> Result<PeriodicProfile> {
    let d = require_v(pt)?;
    let defect = eval_F(pt)? - pt.l2;
    if !(defect.abs() <= FIXED_POINT_TOL) {
        return Err(Error::Certification(format!("F - L2 = {defect:e} at L2 = {}", pt.l2)));
    }
    let report = check_hypotheses(pt)?;
    if !report.all_ok() {
        return Err(Error::Certification(format!("hypotheses violated: {:?}", report.violations)));
    }
    let profile = profile_from(pt, close_period(d));
    for (offset, jump) in profile.join_jumps() {
        if !(jump.abs() <= JOIN_TOL) {
            return Err(Error::DiscontinuousJoin { offset, jump });
        }
    }
    Ok(profile)
}

/// The same concatenation without the fixed-point, hypothesis and continuity
/// checks. Used to show that those checks catch non-solutions.
pub fn assemble_forced(pt: &MapDomainPoint) -> Result<PeriodicProfile> {
    let d = require_v(pt)?;
    Ok(profile_from(pt, d))
}

/// One failed hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1 to 5.
    pub hypothesis: u8,
    pub location: String,
    /// Signed distance into the admissible region; negative or zero means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
    pub h4_ok: bool,
    pub h5_ok: bool,
    pub violations: Vec<Violation>,
}

impl HypothesisReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        let ok = |h: u8| !violations.iter().any(|v| v.hypothesis == h);
        Self { h1_ok: ok(1), h2_ok: ok(2), h3_ok: ok(3), h4_ok: ok(4), h5_ok: ok(5), violations }
    }

    pub fn all_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Open range `(lo, hi)` required of each segment's interior.
fn interior_bounds(eps: f64) -> [(f64, f64); 10] {
    let big = f64::INFINITY;
    let top = (1.0 + eps, big);
    let ramp = (1.0, 1.0 + eps);
    [top, top, top, top, top, ramp, ramp, ramp, (-1.0, 1.0), (-1.0 - eps, -1.0)]
}

/// Checks `y(s) in (lo, hi)` for all `s` in `(0, L)` from critical points and
/// one-sided slopes, with sampling as a redundant check. Returns the smallest margin.
fn interior_margin(seg: &ExpPolySegment, lo: f64, hi: f64) -> f64 {
    let inside = |v: f64| (v - lo).min(hi - v);
    let mut margin = f64::INFINITY;
    for t in seg.critical_points() {
        margin = margin.min(inside(seg.eval(t)));
    }
    // an end lying on a bound is admissible only if the segment leaves it inward
    for (t, into) in [(0.0, 1.0), (seg.length, -1.0)] {
        let v = seg.eval(t);
        let m = inside(v);
        if m.abs() <= ENDPOINT_TOL {
            let slope = into * seg.deriv(t);
            let inward = if (v - lo).abs() <= ENDPOINT_TOL { slope > 0.0 } else { slope < 0.0 };
            if !inward {
                margin = margin.min(-slope.abs().max(f64::MIN_POSITIVE));
            }
        } else {
            margin = margin.min(m);
        }
    }
    for i in 1..50 {
        let v = seg.eval(seg.length * i as f64 / 50.0);
        let m = inside(v);
        if m <= 0.0 {
            margin = margin.min(m);
        }
    }
    margin
}

/// Verifies the five structural hypotheses of the ten-segment orbit.
pub fn check_hypotheses(pt: &MapDomainPoint) -> Result<HypothesisReport> {
    let d = derive_params(pt)?;
    let eps = pt.eps;
    let mut v = Vec::new();
    let mut push = |h: u8, location: String, margin: f64| v.push(Violation { hypothesis: h, location, margin });

    for (i, &l) in d.durations().iter().enumerate() {
        if !(l > 0.0) {
            push(1, format!("L{}", i + 1), l);
        }
    }
    let h2 = 2.0 * d.l1 + 5.0 * d.l2 + 5.0 * d.l3 + 3.0 * d.l4 + 3.0 * d.l5 - 1.0;
    if !(h2.abs() <= DURATION_TOL) {
        push(2, "2L1+5L2+5L3+3L4+3L5".into(), -h2.abs());
    }
    let levels = d.levels();
    for (i, &th) in levels.iter().enumerate() {
        let m = if i < 4 { th - (1.0 + eps) } else { (th - 1.0).min(1.0 + eps - th) };
        if !(m > 0.0) {
            push(3, format!("theta{}", i + 1), m);
        }
    }

    let segs = segments_from(pt, &d);
    let starts = [1.0 + eps, d.theta1, d.theta2, d.theta3, d.theta4, 1.0 + eps, d.theta5, d.theta6, 1.0, -1.0];
    let ends = [d.theta1, d.theta2, d.theta3, d.theta4, 1.0 + eps, d.theta5, d.theta6, 1.0, -1.0, -1.0 - eps];
    for (i, seg) in segs.iter().enumerate() {
        let r0 = (seg.eval(0.0) - starts[i]).abs();
        if !(r0 <= ENDPOINT_TOL) {
            push(4, format!("y{}(0)", i + 1), -r0);
        }
        let r1 = (seg.end_value() - ends[i]).abs();
        if !(r1 <= ENDPOINT_TOL) {
            push(4, format!("y{}(L)", i + 1), -r1);
        }
    }
    for (i, (seg, (lo, hi))) in segs.iter().zip(interior_bounds(eps)).enumerate() {
        if seg.length > 0.0 {
            let m = interior_margin(seg, lo, hi);
            if !(m > 0.0) {
                push(5, format!("y{} interior", i + 1), m);
            }
        }
    }
    Ok(HypothesisReport::from_violations(v))
}

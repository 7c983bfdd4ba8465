//! Method-of-steps integration of `x'(t) = -x(t) + f_K(x(t-1))` with exact
//! exponential-polynomial propagation.
//!
//! On each sub-interval where the delayed value stays in one branch of `f_K`,
//! the forcing is `alpha + kappa * w` with `w` an [`ExpPolySegment`], so the
//! solution is again of that form. The only source of error is locating the
//! times where `x(t-1)` crosses `+-1` and `+-(1+eps)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::PeriodicProfile;
use crate::params::FeedbackParams;
use crate::roots::{safeguarded_newton, Tolerance};
use crate::segment::{Direction, ExpPolySegment};

/// Slack allowed when checking that history pieces tile `[t0 - 1, t0]`.
pub const TILING_SLACK: f64 = 1e-14;
/// Largest jump accepted at an interior join of a history.
pub const HISTORY_JUMP_TOL: f64 = 1e-10;
/// Values this close to a threshold are treated as lying on it.
pub const THRESHOLD_BAND: f64 = 1e-12;
/// Distinct crossings closer than this raise [`Error::EventCluster`].
pub const CLUSTER_TOL: f64 = 1e-13;
/// Bound on the local error of a degree-2 re-anchored piece.
pub const FIT_TOL: f64 = 1e-13;
/// Default horizon for [`poincare_return`].
pub const DEFAULT_T_MAX: f64 = 4.0;

const MAX_SPLITS: f64 = 1e6;
/// Splits closer than this to a piece end are not made.
const MIN_PIECE: f64 = 1e-14;

/// A function on `[t0 - 1, t0]` given by consecutive segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFunction {
    pub pieces: Vec<(f64, ExpPolySegment)>,
    pub t0: f64,
}

impl HistoryFunction {
    pub fn new(pieces: Vec<(f64, ExpPolySegment)>, t0: f64) -> Result<Self> {
        let h = Self { pieces, t0 };
        h.validate()?;
        Ok(h)
    }

    /// `x = value` on `[t0 - 1, t0]`.
    pub fn constant(value: f64, t0: f64) -> Self {
        Self { pieces: vec![(t0 - 1.0, ExpPolySegment::constant(value, 1.0))], t0 }
    }

    /// The window `[t0 - 1, t0]` of a periodic profile.
    pub fn from_profile(profile: &PeriodicProfile, t0: f64) -> Self {
        let start = t0 - 1.0;
        let period = profile.period();
        let mut pieces = Vec::new();
        // shift so that the window starts inside the stored period
        let base = start - ((start + 1.0).rem_euclid(period) - 1.0);
        let mut t = start;
        let mut copy = 0.0;
        while t < t0 - MIN_PIECE {
            for p in &profile.segments {
                let (a, b) = (p.offset + base + copy, p.end() + base + copy);
                let lo = a.max(t);
                let hi = b.min(t0);
                if hi - lo > MIN_PIECE || (hi > lo && b >= t0) {
                    let seg = p.seg.restricted(lo - a, hi - lo);
                    let seg = if p.sign < 0.0 { seg.negated() } else { seg };
                    pieces.push((lo, seg));
                    t = hi;
                }
            }
            copy += period;
        }
        if let Some(last) = pieces.last_mut() {
            last.1.length = t0 - last.0;
        }
        Self { pieces, t0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHistory(m));
        if self.pieces.is_empty() {
            return bad("no pieces".into());
        }
        if (self.pieces[0].0 - (self.t0 - 1.0)).abs() > TILING_SLACK {
            return bad(format!("first piece starts at {} instead of {}", self.pieces[0].0, self.t0 - 1.0));
        }
        for (o, s) in &self.pieces {
            if !s.is_finite() || !o.is_finite() || !(s.length >= 0.0) {
                return bad(format!("malformed piece at {o}"));
            }
        }
        for w in self.pieces.windows(2) {
            let (a, sa) = w[0];
            let (b, sb) = w[1];
            if (a + sa.length - b).abs() > TILING_SLACK {
                return bad(format!("gap or overlap at {b}"));
            }
            let jump = sa.end_value() - sb.eval(0.0);
            if jump.abs() > HISTORY_JUMP_TOL {
                return bad(format!("jump {jump:e} at {b}"));
            }
        }
        let (o, s) = self.pieces.last().unwrap();
        if (o + s.length - self.t0).abs() > TILING_SLACK {
            return bad(format!("last piece ends at {} instead of {}", o + s.length, self.t0));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_pieces(&self.pieces, t)
    }

    /// Sup-norm distance to `other`, sampled at `n` points of the delay interval
    /// (each history in its own time frame).
    pub fn sup_distance(&self, other: &HistoryFunction, n: usize) -> f64 {
        (0..=n)
            .map(|i| {
                let s = -1.0 + i as f64 / n as f64;
                (self.eval(self.t0 + s) - other.eval(other.t0 + s)).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn eval_pieces(pieces: &[(f64, ExpPolySegment)], t: f64) -> f64 {
    let i = pieces.partition_point(|(o, _)| *o <= t).saturating_sub(1);
    let (o, s) = pieces[i];
    s.eval(t - o)
}

/// `x(time - 1)` crossed `threshold` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub threshold: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationResult {
    pub initial_history: HistoryFunction,
    pub trajectory: Vec<(f64, ExpPolySegment)>,
    pub events: Vec<Event>,
    pub final_history: HistoryFunction,
}

impl IntegrationResult {
    /// `x(t)` on `[t0 - 1, t0 + T]`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < self.initial_history.t0 || self.trajectory.is_empty() {
            self.initial_history.eval(t)
        } else {
            eval_pieces(&self.trajectory, t)
        }
    }

    pub fn end_time(&self) -> f64 {
        self.final_history.t0
    }

    /// Rows `t, x(t), x(t-1), f_K(x(t-1))`, `per_unit` rows per unit time.
    pub fn to_csv(&self, params: &FeedbackParams, per_unit: usize) -> String {
        let t0 = self.initial_history.t0;
        let span = self.end_time() - t0;
        let n = ((span * per_unit as f64).ceil() as usize).max(1);
        let mut out = String::from("t,x,x_delayed,feedback\n");
        for i in 0..=n {
            let t = t0 + span * i as f64 / n as f64;
            let xd = self.eval(t - 1.0);
            let _ = writeln!(out, "{t:.16e},{:.16e},{xd:.16e},{:.16e}", self.eval(t), params.eval(xd));
        }
        out
    }

    pub fn events_json(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("events serialize")
    }
}

/// Branch of `f_K` as `alpha + kappa * u`.
fn branch(params: &FeedbackParams, u: f64) -> (f64, f64) {
    let (k, eps) = (params.k, params.eps);
    let r = k / eps;
    if u >= 1.0 + eps {
        (k, 0.0)
    } else if u > 1.0 {
        (-r, r)
    } else if u >= -1.0 {
        (0.0, 0.0)
    } else if u > -1.0 - eps {
        (r, r)
    } else {
        (-k, 0.0)
    }
}

/// Solution of `x' = -x + alpha + kappa * w` on `[0, w.length]` with `x(0) = x0`,
/// split where needed so that each piece is of degree 2 to within [`FIT_TOL`].
fn propagate(x0: f64, alpha: f64, kappa: f64, w: &ExpPolySegment, start: f64, out: &mut Vec<(f64, ExpPolySegment)>) -> Result<f64> {
    let overflow = |w: &ExpPolySegment| kappa * (2.0 * w.z2 - w.c0);
    let d = overflow(w);
    let h = w.length;
    let n = if d == 0.0 || h == 0.0 {
        1.0
    } else {
        let hmax = (FIT_TOL * 6.0 * 12.0 * 3f64.sqrt() / d.abs()).cbrt();
        (h / hmax).ceil().max(1.0)
    };
    if n > MAX_SPLITS {
        return Err(Error::DegreeOverflow(start));
    }
    let n = n as usize;
    let step = h / n as f64;
    let mut x = x0;
    for i in 0..n {
        let s = i as f64 * step;
        let len = if i + 1 == n { h - s } else { step };
        let wi = if i == 0 { *w } else { w.restricted(s, len) };
        let d = overflow(&wi) / 6.0;
        // s^3 replaced by its interpolant through 0, len/2, len
        let mut seg = ExpPolySegment::new(
            len,
            alpha + kappa * wi.c0,
            x,
            alpha + kappa * wi.z0 - d * 0.5 * len * len,
            0.5 * (alpha + kappa * wi.z1) + d * 1.5 * len,
        );
        if d == 0.0 {
            seg.z1 = alpha + kappa * wi.z0;
            seg.z2 = 0.5 * (alpha + kappa * wi.z1);
        }
        x = seg.end_value();
        out.push((start + s, seg));
    }
    Ok(x)
}

/// Tracks the side of one threshold across consecutive pieces.
#[derive(Debug, Clone, Copy)]
struct LevelTracker {
    level: f64,
    side: i8,
    touch: Option<f64>,
}

impl LevelTracker {
    fn side_of(&self, v: f64) -> i8 {
        if (v - self.level).abs() <= THRESHOLD_BAND {
            0
        } else if v > self.level {
            1
        } else {
            -1
        }
    }

    /// Crossings of the level by `w`, which starts at time `origin`. Returns
    /// `(local time, direction)`; a crossing completed at a touch reached
    /// earlier is reported at the touch, possibly before `origin`.
    fn scan(&mut self, w: &ExpPolySegment, origin: f64) -> Vec<(f64, Direction)> {
        let mut out = Vec::new();
        let breaks = w.monotone_breaks();
        for win in breaks.windows(2) {
            let (a, b) = (win[0], win[1]);
            let (va, vb) = (w.eval(a), w.eval(b));
            let (sa, sb) = (self.side_of(va), self.side_of(vb));
            if sa == 0 && self.touch.is_none() {
                self.touch = Some(origin + a);
            }
            if sb == 0 {
                if self.touch.is_none() {
                    self.touch = Some(origin + b);
                }
                continue;
            }
            let dir = if sb > 0 { Direction::Up } else { Direction::Down };
            if sa != 0 && sa != sb {
                let tol = Tolerance { x_abs: 1e-16, x_rel: 2.0 * f64::EPSILON, f_abs: 0.0, max_iter: 200 };
                let f = |t: f64| Ok((w.eval(t) - self.level, w.deriv(t)));
                let guess = a + (b - a) * (self.level - va) / (vb - va);
                let t = safeguarded_newton(f, a, b, guess, tol).map(|r| r.x).unwrap_or(guess);
                out.push((t, dir));
            } else if sa == 0 && self.side != 0 && self.side != sb {
                out.push((self.touch.map_or(a, |t| t - origin), dir));
            }
            self.side = sb;
            self.touch = None;
        }
        out
    }
}

struct Integrator {
    params: FeedbackParams,
    /// Everything computed so far, starting with the history.
    pieces: Vec<(f64, ExpPolySegment)>,
    trackers: [LevelTracker; 4],
    events: Vec<Event>,
    t: f64,
}

impl Integrator {
    fn new(params: FeedbackParams, h: &HistoryFunction) -> Result<Self> {
        h.validate()?;
        let eps = params.eps;
        let tracker = |level| LevelTracker { level, side: 0, touch: None };
        Ok(Self {
            params,
            pieces: h.pieces.clone(),
            trackers: [tracker(-1.0 - eps), tracker(-1.0), tracker(1.0), tracker(1.0 + eps)],
            events: Vec::new(),
            t: h.t0,
        })
    }

    /// Advances from `t` to `t + dt`, `0 < dt <= 1`.
    fn advance(&mut self, dt: f64) -> Result<()> {
        let (from, to) = (self.t - 1.0, self.t - 1.0 + dt);
        let first = self.pieces.partition_point(|(o, s)| o + s.length <= from);
        let mut delayed = Vec::new();
        for &(o, s) in &self.pieces[first..] {
            let (lo, hi) = (o.max(from), (o + s.length).min(to));
            if o >= to {
                break;
            }
            if hi > lo {
                delayed.push((lo, s.restricted(lo - o, hi - lo)));
            }
        }
        let mut x = eval_pieces(&self.pieces, self.t);
        if let Some(&(o, s)) = self.pieces.last() {
            if o < self.t {
                x = s.eval(self.t - o);
            }
        }
        let mut new_pieces = Vec::new();
        for (o, w) in delayed {
            let mut cuts: Vec<(f64, f64, Direction)> = Vec::new();
            for tr in self.trackers.iter_mut() {
                for (t, dir) in tr.scan(&w, o) {
                    cuts.push((t, tr.level, dir));
                }
            }
            cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
            for pair in cuts.windows(2) {
                if pair[1].0 - pair[0].0 < CLUSTER_TOL {
                    return Err(Error::EventCluster(o + pair[0].0 + 1.0, o + pair[1].0 + 1.0));
                }
            }
            if let (Some(last), Some(first)) = (self.events.last(), cuts.first()) {
                let gap = o + first.0 + 1.0 - last.time;
                if gap.abs() < CLUSTER_TOL && last.threshold != first.1 {
                    return Err(Error::EventCluster(last.time, o + first.0 + 1.0));
                }
            }
            let mut bounds = vec![0.0];
            for &(t, level, direction) in &cuts {
                self.events.push(Event { time: o + t + 1.0, threshold: level, direction });
                if t > MIN_PIECE && t < w.length - MIN_PIECE {
                    bounds.push(t);
                }
            }
            bounds.push(w.length);
            for b in bounds.windows(2) {
                let (a, len) = (b[0], b[1] - b[0]);
                let sub = if a == 0.0 && len == w.length { w } else { w.restricted(a, len) };
                let (alpha, kappa) = branch(&self.params, sub.eval(0.5 * len));
                x = propagate(x, alpha, kappa, &sub, o + a + 1.0, &mut new_pieces)?;
            }
        }
        self.pieces.extend(new_pieces);
        self.t += dt;
        Ok(())
    }

    fn history_at(&self, t0: f64) -> HistoryFunction {
        let start = t0 - 1.0;
        let mut pieces = Vec::new();
        let first = self.pieces.partition_point(|(o, s)| o + s.length <= start);
        for &(o, s) in &self.pieces[first..] {
            let (lo, hi) = (o.max(start), (o + s.length).min(t0));
            if o >= t0 {
                break;
            }
            if hi > lo {
                pieces.push((lo, s.restricted(lo - o, hi - lo)));
            }
        }
        HistoryFunction { pieces, t0 }
    }
}

/// Advances the solution with history `h` by `T`.
pub fn integrate(params: &FeedbackParams, h: &HistoryFunction, t_span: f64) -> Result<IntegrationResult> {
    if !(t_span > 0.0 && t_span.is_finite()) {
        return Err(Error::Domain(format!("T = {t_span} must be positive")));
    }
    let mut it = Integrator::new(*params, h)?;
    let end = h.t0 + t_span;
    while it.t < end {
        let dt = (end - it.t).min(1.0);
        it.advance(dt)?;
        if end - it.t < MIN_PIECE {
            it.t = end;
        }
    }
    let n0 = h.pieces.len();
    Ok(IntegrationResult {
        initial_history: h.clone(),
        trajectory: it.pieces[n0..].to_vec(),
        events: it.events.clone(),
        final_history: it.history_at(end),
    })
}

/// Sampled `|p' + p - f_K(p(t-1))|` over one period, combined with the largest
/// jump at a join. Samples sit at midpoints of `n_samples` equal cells.
pub fn residual(params: &FeedbackParams, profile: &PeriodicProfile, n_samples: usize) -> f64 {
    sampled_residual(params, profile, n_samples, 0.0).max(profile.max_join_jump())
}

/// The sampled part of [`residual`], with sample times shifted by `shift`.
pub fn sampled_residual(params: &FeedbackParams, profile: &PeriodicProfile, n_samples: usize, shift: f64) -> f64 {
    let period = profile.period();
    (0..n_samples)
        .map(|j| {
            let t = shift - 1.0 + period * (j as f64 + 0.5) / n_samples as f64;
            let lhs = profile.derivative(t) + profile.evaluate(t);
            (lhs - params.eval(profile.evaluate(t - 1.0))).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReturn {
    pub return_time: f64,
    pub return_history: HistoryFunction,
    pub events: Vec<Event>,
}

/// Next return to `{phi : phi(-1) = 1 + eps}` in the upward direction, within
/// [`DEFAULT_T_MAX`].
pub fn poincare_return(params: &FeedbackParams, h: &HistoryFunction) -> Result<PoincareReturn> {
    poincare_return_within(params, h, DEFAULT_T_MAX)
}

pub fn poincare_return_within(params: &FeedbackParams, h: &HistoryFunction, t_max: f64) -> Result<PoincareReturn> {
    let mut it = Integrator::new(*params, h)?;
    let level = 1.0 + params.eps;
    let end = h.t0 + t_max;
    let mut seen_down = false;
    let mut checked = 0;
    while it.t < end {
        it.advance((end - it.t).min(1.0))?;
        for ev in &it.events[checked..] {
            if ev.threshold != level {
                continue;
            }
            match ev.direction {
                Direction::Down => seen_down = true,
                Direction::Up if seen_down => {
                    let return_history = it.history_at(ev.time);
                    return Ok(PoincareReturn {
                        return_time: ev.time - h.t0,
                        return_history,
                        events: it.events.iter().copied().filter(|e| e.time <= ev.time).collect(),
                    });
                }
                Direction::Up => {}
            }
        }
        checked = it.events.len();
    }
    Err(Error::NoReturn(t_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::locate_fold;
    use crate::orbit::assemble_profile;
    use crate::reduced_map::MapDomainPoint;

    fn fold_profile(eps: f64) -> (FeedbackParams, PeriodicProfile) {
        let b = locate_fold(eps).unwrap();
        let pt = MapDomainPoint::new(b.l2_star, b.k_star, eps).unwrap();
        (FeedbackParams::new(b.k_star, eps).unwrap(), assemble_profile(&pt).unwrap())
    }

    #[test]
    fn zero_history_stays_zero() {
        let p = FeedbackParams::new(6.9, 1e-3).unwrap();
        let r = integrate(&p, &HistoryFunction::constant(0.0, 0.0), 3.0).unwrap();
        assert!(r.events.is_empty());
        for i in 0..=30 {
            assert_eq!(r.eval(i as f64 * 0.1), 0.0);
        }
    }

    #[test]
    fn equilibria_survive_one_step() {
        let p = FeedbackParams::new(6.9, 1e-3).unwrap();
        let chi = p.fixed_points().unwrap().chi_plus;
        for c in [chi, -chi] {
            let r = integrate(&p, &HistoryFunction::constant(c, 0.0), 1.0).unwrap();
            for i in 0..=10 {
                assert!((r.eval(i as f64 * 0.1) - c).abs() <= 1e-11, "{c}");
            }
        }
    }

    #[test]
    fn saturated_history_decays_to_k() {
        // x(t-1) >= 1 + eps throughout, so x = K + (x0 - K) e^{-t}
        let p = FeedbackParams::new(6.9, 1e-2).unwrap();
        let r = integrate(&p, &HistoryFunction::constant(2.0, 0.0), 1.0).unwrap();
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            assert!((r.eval(t) - (6.9 - 4.9 * (-t).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn history_window_matches_profile() {
        let (_, prof) = fold_profile(1e-2);
        for t0 in [0.0, 0.37, 1.9, -0.5] {
            let h = HistoryFunction::from_profile(&prof, t0);
            h.validate().unwrap();
            for i in 0..=40 {
                let t = t0 - 1.0 + i as f64 / 40.0;
                assert!((h.eval(t) - prof.evaluate(t)).abs() < 1e-13, "t0 {t0} t {t}");
            }
        }
    }

    #[test]
    fn invalid_histories_are_rejected() {
        let s = ExpPolySegment::constant(1.0, 0.5);
        assert!(HistoryFunction::new(vec![(-1.0, s)], 0.0).is_err());
        let t = ExpPolySegment::constant(2.0, 0.5);
        assert!(HistoryFunction::new(vec![(-1.0, s), (-0.5, t)], 0.0).is_err());
        assert!(HistoryFunction::new(vec![(-1.0, s), (-0.5, s)], 0.0).is_ok());
    }

    #[test]
    fn degree_overflow_is_split_accurately() {
        // the lower ramp driven by a quadratic history forces a cubic
        let p = FeedbackParams::new(6.9, 0.5).unwrap();
        let w = ExpPolySegment::new(1.0, -1.2, -1.2, -1.2, 0.3);
        let h = HistoryFunction::new(vec![(-1.0, w)], 0.0).unwrap();
        let r = integrate(&p, &h, 1.0).unwrap();
        assert!(r.trajectory.len() > 1);
        let tmax = 1.0;
        // compare against a fine explicit quadrature of the variation-of-constants formula
        let n = 20000;
        let mut acc = 0.0;
        let mut x_ref = Vec::new();
        for i in 0..=n {
            let s = tmax * i as f64 / n as f64;
            if i > 0 {
                let sm = s - 0.5 * tmax / n as f64;
                acc += (sm).exp() * p.eval(w.eval(sm)) * tmax / n as f64;
            }
            x_ref.push((s, (-s).exp() * (w.end_value() + acc)));
        }
        for (s, xr) in x_ref.iter().step_by(1000) {
            assert!((r.eval(*s) - xr).abs() < 1e-8, "{s}");
        }
    }

    #[test]
    fn fold_profile_residual_is_tiny() {
        let (p, prof) = fold_profile(1e-3);
        assert!(residual(&p, &prof, 20000) <= 1e-10);
    }
}

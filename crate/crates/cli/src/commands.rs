use std::cell::OnceCell;
use std::fmt::Write as _;

use delayfold::asymptotics::{report_json, report_table, run_all};
use delayfold::bifurcation::{locate_fold, scan_fixed_points, sweep_branch, BifurcationPoint, BranchPoint, ScanOptions};
use delayfold::dde::{integrate, poincare_return, residual, HistoryFunction};
use delayfold::orbit::{assemble_forced, check_hypotheses, HypothesisReport, PeriodicProfile};
use delayfold::reduced_map::{eval_F, solve_K0, MapDomainPoint};
use delayfold::segment::Direction;
use delayfold::FeedbackParams;
use serde::Serialize;

use crate::config::{Branch, Command, Format, KSpec, RunConfig};
use crate::failure::Failure;
use crate::output::{cell, write_atomic};

/// What a command produced: text for stdout and the certification checks that failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub failed: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failed.push(what());
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, Failure> {
    match cfg.command {
        Command::K0 => k0(cfg),
        Command::Fold => fold(cfg),
        Command::Sweep => sweep(cfg),
        Command::Orbit => orbit(cfg),
        Command::Verify => verify(cfg),
        Command::Oracle => oracle(cfg),
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn emit(cfg: &RunConfig, contents: &str) -> Result<(), Failure> {
    match &cfg.out {
        Some(p) => write_atomic(p, contents),
        None => Ok(()),
    }
}

/// Resolves `K*` at most once per run.
struct FoldCache {
    eps: f64,
    point: OnceCell<BifurcationPoint>,
}

impl FoldCache {
    fn new(eps: f64) -> Self {
        Self { eps, point: OnceCell::new() }
    }

    fn get(&self) -> Result<BifurcationPoint, Failure> {
        if let Some(b) = self.point.get() {
            return Ok(*b);
        }
        let b = locate_fold(self.eps)?;
        Ok(*self.point.get_or_init(|| b))
    }

    fn k(&self, spec: KSpec) -> Result<f64, Failure> {
        spec.resolve(|| Ok(self.get()?.k_star))
    }
}

#[derive(Serialize)]
struct K0Report {
    value: f64,
    residual: f64,
    iterations: usize,
}

fn k0(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let s = solve_K0()?;
    let summary = if cfg.json {
        json(&K0Report { value: s.value, residual: s.residual, iterations: s.iterations })
    } else {
        format!(
            "K0 = {:.16e}\nresidual = {:.3e}\niterations = {}\nbracket = [{}, {}]\n",
            s.value, s.residual, s.iterations, s.bracket.0, s.bracket.1
        )
    };
    emit(cfg, &summary)?;
    let mut out = Outcome { summary, failed: Vec::new() };
    out.check(s.residual.abs() <= cfg.tolerances.k0_residual, || format!("K0 residual {:.3e}", s.residual));
    Ok(out)
}

#[derive(Serialize)]
struct FoldReport {
    #[serde(flatten)]
    point: BifurcationPoint,
    sign_ratio: f64,
    failed_conditions: Vec<&'static str>,
}

fn fold(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let b = locate_fold(cfg.eps)?;
    let failed = b.failed_conditions();
    let mut out = Outcome::default();
    let _ = writeln!(out.summary, "eps = {:e}", b.eps);
    let _ = writeln!(out.summary, "K* = {:.16e}", b.k_star);
    let _ = writeln!(out.summary, "L2* = {:.16e}  (L2_hat = {:.16e})", b.l2_star, b.l2_hat);
    let _ = writeln!(out.summary, "F - L2 = {:.3e}", b.f_residual);
    let _ = writeln!(out.summary, "dF/dL2 - 1 = {:.3e}", b.dfdl2_minus_1);
    let _ = writeln!(out.summary, "dF/dK = {:.10e}", b.dfdk);
    let _ = writeln!(out.summary, "d2F/dL2^2 = {:.10e}", b.d2fdl2sq);
    let _ = writeln!(out.summary, "fixed points appear for K {} K*", if b.sign_ratio() < 0.0 { ">" } else { "<" });
    let contents = match cfg.format {
        Format::Json => json(&FoldReport { point: b, sign_ratio: b.sign_ratio(), failed_conditions: failed.clone() }),
        Format::Csv => format!(
            "eps,k_star,l2_star,l2_hat,f_residual,dfdl2_minus_1,dfdk,d2fdl2sq\n{}\n",
            [b.eps, b.k_star, b.l2_star, b.l2_hat, b.f_residual, b.dfdl2_minus_1, b.dfdk, b.d2fdl2sq]
                .map(|v| cell(Some(v)))
                .join(",")
        ),
    };
    emit(cfg, &contents)?;
    for c in failed {
        out.failed.push(format!("saddle-node condition {c}"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct SweepReport<'a> {
    eps: f64,
    k_star: Option<f64>,
    points: &'a [BranchPoint],
}

fn sweep_csv(points: &[BranchPoint]) -> String {
    let mut s = String::from("k,count,classification,in_v,l2_lower,l2_upper,max_defect,argmax,l2_hat\n");
    for b in points {
        let cls = serde_json::to_value(b.classification).expect("classification serializes");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            cell(Some(b.k)),
            b.fixed_points.len(),
            cls.as_str().unwrap_or_default(),
            b.in_v.iter().filter(|&&v| v).count(),
            cell(b.fixed_points.first().copied()),
            cell(if b.fixed_points.len() > 1 { b.fixed_points.last().copied() } else { None }),
            cell(Some(b.max_defect)),
            cell(Some(b.argmax)),
            cell(Some(b.l2_hat)),
        );
    }
    s
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let range = cfg.k_range.expect("validated");
    let fold = FoldCache::new(cfg.eps);
    let (lo, hi) = (fold.k(range.lo)?, fold.k(range.hi)?);
    let k_star = if range.lo.needs_fold() || range.hi.needs_fold() { Some(fold.get()?.k_star) } else { None };
    let points = sweep_branch(cfg.eps, lo, hi, range.n)?;
    let contents = match cfg.format {
        Format::Csv => sweep_csv(&points),
        Format::Json => json(&SweepReport { eps: cfg.eps, k_star, points: &points }),
    };
    emit(cfg, &contents)?;

    let mut out = Outcome::default();
    let _ = writeln!(out.summary, "eps = {:e}, K in [{lo:.16e}, {hi:.16e}], {} points", cfg.eps, points.len());
    if let Some(k) = k_star {
        let _ = writeln!(out.summary, "K* = {k:.16e}");
    }
    let _ = writeln!(out.summary, "{:>24} {:>5}  classification", "K", "count");
    for b in &points {
        let cls = serde_json::to_value(b.classification).expect("classification serializes");
        let _ = writeln!(out.summary, "{:>24.16e} {:>5}  {}", b.k, b.fixed_points.len(), cls.as_str().unwrap_or_default());
    }
    for b in &points {
        let worst = b.defects.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        out.check(worst <= cfg.tolerances.fixed_point, || format!("fixed-point defect {worst:.3e} at K = {:.16e}", b.k));
    }
    Ok(out)
}

/// The fixed point of the map on the requested branch at `K`.
fn branch_point(cfg: &RunConfig, k: f64) -> Result<MapDomainPoint, Failure> {
    let bp = scan_fixed_points(k, cfg.eps, &ScanOptions::default())?;
    let roots = &bp.fixed_points;
    let l2 = match cfg.branch {
        Branch::Lower => roots.first(),
        Branch::Upper if roots.len() >= 2 => roots.last(),
        Branch::Upper => None,
    };
    let l2 = l2.copied().ok_or_else(|| {
        Failure::Domain(format!("no {} fixed point at K = {k:.16e} ({} found)", cfg.branch.name(), roots.len()))
    })?;
    Ok(MapDomainPoint::new(l2, k, cfg.eps)?)
}

#[derive(Debug, Clone, Serialize)]
struct OrbitChecks {
    fixed_point_defect: f64,
    max_join_jump: f64,
    dde_residual: f64,
    antisymmetry: f64,
    max: f64,
    min: f64,
    maxima: Vec<f64>,
    minima: Vec<f64>,
}

fn orbit_checks(p: &FeedbackParams, pt: &MapDomainPoint, prof: &PeriodicProfile, samples: usize) -> Result<OrbitChecks, Failure> {
    let om = prof.omega;
    let n = samples.max(5000);
    let antisymmetry = (0..=n)
        .map(|i| {
            let t = -1.0 + om * i as f64 / n as f64;
            (prof.evaluate(t + om) + prof.evaluate(t)).abs()
        })
        .fold(0.0, f64::max);
    let values = prof.sample(n.max(20_000));
    let (maxima, minima) = prof.extrema();
    Ok(OrbitChecks {
        fixed_point_defect: eval_F(pt)? - pt.l2,
        max_join_jump: prof.max_join_jump(),
        dde_residual: residual(p, prof, n.max(20_000)),
        antisymmetry,
        max: values.iter().map(|s| s.1).fold(f64::MIN, f64::max),
        min: values.iter().map(|s| s.1).fold(f64::MAX, f64::min),
        maxima,
        minima,
    })
}

#[derive(Serialize)]
struct OrbitReport<'a> {
    eps: f64,
    k: f64,
    branch: Branch,
    l2: f64,
    hypotheses: &'a HypothesisReport,
    checks: &'a OrbitChecks,
}

#[derive(Serialize)]
struct OrbitExport<'a> {
    #[serde(flatten)]
    report: &'a OrbitReport<'a>,
    profile: &'a PeriodicProfile,
}

fn orbit(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let fold = FoldCache::new(cfg.eps);
    let k = fold.k(cfg.k.expect("validated"))?;
    let p = FeedbackParams::new(k, cfg.eps)?;
    let pt = branch_point(cfg, k)?;
    let hyp = check_hypotheses(&pt)?;
    let prof = assemble_forced(&pt)?;
    let c = orbit_checks(&p, &pt, &prof, cfg.samples)?;
    let report = OrbitReport { eps: cfg.eps, k, branch: cfg.branch, l2: pt.l2, hypotheses: &hyp, checks: &c };
    let contents = match cfg.format {
        Format::Csv => prof.to_csv(cfg.samples),
        Format::Json => json(&OrbitExport { report: &report, profile: &prof }),
    };
    emit(cfg, &contents)?;
    if let Some(path) = &cfg.report {
        write_atomic(path, &json(&report))?;
    }

    let mut out = Outcome::default();
    let s = &mut out.summary;
    let _ = writeln!(s, "eps = {:e}, K = {k:.16e}, branch = {}", cfg.eps, cfg.branch.name());
    let _ = writeln!(s, "L2 = {:.16e}, period = {:.16e}", pt.l2, prof.period());
    let _ = writeln!(s, "hypotheses H1..H5: {} {} {} {} {}", hyp.h1_ok, hyp.h2_ok, hyp.h3_ok, hyp.h4_ok, hyp.h5_ok);
    let _ = writeln!(s, "max join jump = {:.3e}", c.max_join_jump);
    let _ = writeln!(s, "DDE residual = {:.3e}", c.dde_residual);
    let _ = writeln!(s, "antisymmetry = {:.3e}", c.antisymmetry);
    let _ = writeln!(s, "max p = {:.16e}, min p = {:.16e}", c.max, c.min);
    let _ = writeln!(s, "local maxima = {}, local minima = {}", c.maxima.len(), c.minima.len());

    let tol = &cfg.tolerances;
    for v in &hyp.violations {
        out.failed.push(format!("H{} at {} (margin {:.3e})", v.hypothesis, v.location, v.margin));
    }
    out.check(c.fixed_point_defect.abs() <= tol.fixed_point, || format!("F - L2 = {:.3e}", c.fixed_point_defect));
    out.check(c.max_join_jump <= tol.join, || format!("join jump {:.3e}", c.max_join_jump));
    out.check(c.dde_residual <= tol.dde_residual, || format!("DDE residual {:.3e}", c.dde_residual));
    out.check(c.antisymmetry <= tol.antisymmetry, || format!("antisymmetry {:.3e}", c.antisymmetry));
    let e = cfg.eps;
    out.check(c.max > 1.0 + e && c.min < -1.0 - e, || format!("not large amplitude: range [{:.6e}, {:.6e}]", c.min, c.max));
    out.check(c.maxima.len() == 1 && c.minima.len() == 1, || {
        format!("{} maxima and {} minima per period", c.maxima.len(), c.minima.len())
    });
    Ok(out)
}

#[derive(Debug, Serialize)]
struct EventOffset {
    expected: f64,
    observed: Option<f64>,
    threshold: f64,
    direction: Direction,
}

#[derive(Serialize)]
struct OracleReport {
    eps: f64,
    k: f64,
    branch: Branch,
    l2: f64,
    periods: usize,
    period: f64,
    sup_difference: f64,
    final_history_distance: f64,
    max_event_offset: f64,
    events: Vec<EventOffset>,
    return_time: f64,
    return_time_error: f64,
}

fn oracle(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let fold = FoldCache::new(cfg.eps);
    let k = fold.k(cfg.k.unwrap_or(KSpec::FromFold(1e-4)))?;
    let p = FeedbackParams::new(k, cfg.eps)?;
    let pt = branch_point(cfg, k)?;
    let prof = assemble_forced(&pt)?;
    let h = HistoryFunction::from_profile(&prof, 0.0);
    let period = prof.period();
    let span = period * cfg.periods as f64;
    let r = integrate(&p, &h, span)?;
    let ret = poincare_return(&p, &h)?;

    let n = cfg.samples.max(20_000) * cfg.periods;
    let sup = (0..=n)
        .map(|i| {
            let t = span * i as f64 / n as f64;
            (r.eval(t) - prof.evaluate(t)).abs()
        })
        .fold(0.0, f64::max);
    let final_dist = r.final_history.sup_distance(&HistoryFunction::from_profile(&prof, span), 5000);

    let d = prof.derived;
    let e = cfg.eps;
    let one = [
        (d.tau1, 1.0 + e, Direction::Down),
        (d.tau2, 1.0, Direction::Down),
        (d.tau3, -1.0, Direction::Down),
        (d.omega, -1.0 - e, Direction::Down),
        (d.omega + d.tau1, -1.0 - e, Direction::Up),
        (d.omega + d.tau2, -1.0, Direction::Up),
        (d.omega + d.tau3, 1.0, Direction::Up),
        (period, 1.0 + e, Direction::Up),
    ];
    // the section crossing that closes the last period falls on the end of the run
    let expected: Vec<(f64, f64, Direction)> = (0..cfg.periods)
        .flat_map(|j| one.iter().map(move |&(t, level, dir)| (t + period * j as f64, level, dir)))
        .take(one.len() * cfg.periods - 1)
        .collect();
    let events: Vec<EventOffset> = expected
        .iter()
        .enumerate()
        .map(|(i, &(t, level, dir))| EventOffset {
            expected: t,
            observed: r.events.get(i).filter(|ev| ev.direction == dir && ev.threshold == level).map(|ev| ev.time),
            threshold: level,
            direction: dir,
        })
        .collect();
    let max_event_offset =
        events.iter().map(|e| e.observed.map_or(f64::INFINITY, |o| (o - e.expected).abs())).fold(0.0, f64::max);
    let report = OracleReport {
        eps: cfg.eps,
        k,
        branch: cfg.branch,
        l2: pt.l2,
        periods: cfg.periods,
        period,
        sup_difference: sup,
        final_history_distance: final_dist,
        max_event_offset,
        events,
        return_time: ret.return_time,
        return_time_error: (ret.return_time - period).abs(),
    };
    let contents = match cfg.format {
        Format::Csv => r.to_csv(&p, cfg.samples),
        Format::Json => json(&report),
    };
    emit(cfg, &contents)?;
    if let Some(path) = &cfg.report {
        write_atomic(path, &json(&report))?;
    }

    let mut out = Outcome::default();
    let s = &mut out.summary;
    let _ = writeln!(s, "eps = {:e}, K = {k:.16e}, branch = {}, L2 = {:.16e}", cfg.eps, cfg.branch.name(), pt.l2);
    let _ = writeln!(s, "integrated {} period(s) of length {:.16e}", cfg.periods, period);
    let _ = writeln!(s, "sup |integrated - closed form| = {:.3e}", report.sup_difference);
    let _ = writeln!(s, "final history distance = {:.3e}", report.final_history_distance);
    let _ = writeln!(s, "events: {} detected, {} expected, max offset {:.3e}", r.events.len(), expected.len(), max_event_offset);
    let _ = writeln!(s, "Poincare return time = {:.16e} (error {:.3e})", report.return_time, report.return_time_error);

    let tol = &cfg.tolerances;
    out.check(sup <= tol.oracle_sup, || format!("sup difference {sup:.3e}"));
    out.check(final_dist <= tol.oracle_sup, || format!("final history distance {final_dist:.3e}"));
    out.check(r.events.len() == expected.len(), || format!("{} events, expected {}", r.events.len(), expected.len()));
    out.check(max_event_offset <= tol.event_time, || format!("event offset {max_event_offset:.3e}"));
    out.check(report.return_time_error <= tol.return_time, || format!("return time error {:.3e}", report.return_time_error));
    Ok(out)
}

fn verify(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let checks = run_all(&cfg.eps_grid)?;
    let contents = match cfg.format {
        Format::Json => {
            let mut s = report_json(&checks);
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("name,order,limit,finest_observed,fitted_slope,rate_constant,budget,pass\n");
            for c in &checks {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    c.name,
                    c.order,
                    cell(Some(c.limit)),
                    cell(c.observed.last().copied()),
                    cell(Some(c.fitted_slope)),
                    cell(Some(c.fitted_rate_constant)),
                    cell(Some(c.budget)),
                    c.pass
                );
            }
            s
        }
    };
    emit(cfg, &contents)?;
    let mut out = Outcome { summary: report_table(&checks), failed: Vec::new() };
    for c in checks.iter().filter(|c| !c.pass) {
        out.failed.push(format!("limit check {} (slope {:.3}, constant {:.3e})", c.name, c.fitted_slope, c.fitted_rate_constant));
    }
    Ok(out)
}

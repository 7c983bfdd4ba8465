//! `delayfold`: bifurcation diagrams, periodic orbits and verification reports
//! for `x'(t) = -x(t) + f_K(x(t-1))`.

mod commands;
mod config;
mod failure;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Branch, Command, FileConfig, FlagValues, Format, KRange, KSpec, RunConfig};
use failure::Failure;

#[derive(Parser)]
#[command(name = "delayfold", version, about = "Saddle-node bifurcation of large-amplitude periodic orbits")]
#[command(after_help = "Settings not given as flags are read from the JSON file named by DELAYFOLD_CONFIG, then defaults.\n\
Exit codes: 0 ok, 2 usage, 3 domain, 4 convergence, 5 certification, 6 i/o.")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve (K-1)(K+1)^3 = e (K^2-2K-1)^2 for the limiting fold parameter
    K0 {
        /// Print {value, residual, iterations} as JSON
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        shared: Shared,
    },
    /// Locate the fold point (L2*, K*) and its non-degeneracy diagnostics
    Fold {
        #[command(flatten)]
        shared: Shared,
    },
    /// Count fixed points of the reduction map over a grid of K
    Sweep {
        /// lo:hi:n, where lo and hi may be written K*, K*+d or K*-d
        #[arg(long)]
        k_range: Option<KRange>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Reconstruct one periodic orbit and check it
    Orbit {
        #[command(flatten)]
        orbit: OrbitArgs,
        /// Also write the hypothesis report and checks as JSON here
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Run the small-eps limit battery
    Verify {
        /// Descending list of eps values
        #[arg(long, value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Integrate from an orbit and compare with the closed form
    Oracle {
        #[command(flatten)]
        orbit: OrbitArgs,
        /// Number of periods to integrate
        #[arg(long)]
        periods: Option<usize>,
        /// Also write the comparison report as JSON here
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        shared: Shared,
    },
}

#[derive(Args)]
struct OrbitArgs {
    /// Feedback gain: a number, K*, or K*+d
    #[arg(long, allow_hyphen_values = true)]
    k: Option<KSpec>,
    #[arg(long, value_enum)]
    branch: Option<Branch>,
}

#[derive(Args)]
struct Shared {
    /// Ramp width of the feedback
    #[arg(long)]
    eps: Option<f64>,
    /// Output file, written atomically
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Sample density of exported curves
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Tolerance override, NAME=VALUE; repeatable
    #[arg(long = "tol", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|_| format!("invalid tolerance value {v:?}"))?;
    Ok((k.trim().to_string(), v))
}

fn flags(cmd: Cmd) -> (Command, FlagValues) {
    let with = |s: Shared| FlagValues {
        eps: s.eps,
        out: s.out,
        format: s.format,
        samples: s.samples,
        jobs: s.jobs,
        tolerances: s.tol,
        ..FlagValues::default()
    };
    match cmd {
        Cmd::K0 { json, shared } => (Command::K0, FlagValues { json, ..with(shared) }),
        Cmd::Fold { shared } => (Command::Fold, with(shared)),
        Cmd::Sweep { k_range, shared } => (Command::Sweep, FlagValues { k_range, ..with(shared) }),
        Cmd::Orbit { orbit, report, shared } => {
            (Command::Orbit, FlagValues { k: orbit.k, branch: orbit.branch, report, ..with(shared) })
        }
        Cmd::Verify { eps_grid, shared } => (Command::Verify, FlagValues { eps_grid, ..with(shared) }),
        Cmd::Oracle { orbit, periods, report, shared } => {
            (Command::Oracle, FlagValues { k: orbit.k, branch: orbit.branch, periods, report, ..with(shared) })
        }
    }
}

fn run(cli: Cli) -> Result<commands::Outcome, Failure> {
    let (command, flags) = flags(cli.command);
    let file = FileConfig::from_env()?;
    let cfg = RunConfig::resolve(command, flags, file)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .map_err(|e| Failure::Usage(format!("--jobs {}: {e}", cfg.jobs)))?;
    commands::run(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.summary.as_bytes());
            let _ = stdout.flush();
            if out.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &out.failed {
                    eprintln!("FAILED: {f}");
                }
                let e = Failure::Certification(format!("{} check(s) failed", out.failed.len()));
                eprintln!("{e}");
                ExitCode::from(e.exit_code() as u8)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

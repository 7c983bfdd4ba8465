use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Environment variable naming the JSON config file.
pub const CONFIG_ENV: &str = "DELAYFOLD_CONFIG";

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_PERIODS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    K0,
    Fold,
    Sweep,
    Orbit,
    Verify,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Upper,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A value of `K`, either a number or an offset from the fold, e.g. `K*+1e-4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KSpec {
    Value(f64),
    FromFold(f64),
}

impl KSpec {
    pub fn resolve(self, k_star: impl FnOnce() -> Result<f64, Failure>) -> Result<f64, Failure> {
        match self {
            KSpec::Value(k) => Ok(k),
            KSpec::FromFold(dk) => Ok(k_star()? + dk),
        }
    }

    pub fn needs_fold(self) -> bool {
        matches!(self, KSpec::FromFold(_))
    }
}

impl FromStr for KSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("invalid K value {s:?}: expected a number, K*, or K*+offset");
        match s.strip_prefix("K*") {
            Some("") => Ok(KSpec::FromFold(0.0)),
            Some(rest) if rest.starts_with('+') || rest.starts_with('-') => {
                let dk: f64 = rest.parse().map_err(|_| bad())?;
                if dk.is_finite() {
                    Ok(KSpec::FromFold(dk))
                } else {
                    Err(bad())
                }
            }
            Some(_) => Err(bad()),
            None => match s.parse::<f64>() {
                Ok(k) if k.is_finite() => Ok(KSpec::Value(k)),
                _ => Err(bad()),
            },
        }
    }
}

/// `lo:hi:n` with `K*` tokens allowed at either end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KRange {
    pub lo: KSpec,
    pub hi: KSpec,
    pub n: usize,
}

impl FromStr for KRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("invalid K range {s:?}: expected lo:hi:n"));
        }
        let n = parts[2].trim().parse::<usize>().map_err(|_| format!("invalid point count {:?}", parts[2]))?;
        Ok(KRange { lo: parts[0].parse()?, hi: parts[1].parse()?, n })
    }
}

/// Tolerances used by the certification steps; each can be overridden by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub join: f64,
    pub dde_residual: f64,
    pub antisymmetry: f64,
    pub oracle_sup: f64,
    pub event_time: f64,
    pub return_time: f64,
    pub fixed_point: f64,
    pub k0_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            join: 1e-12,
            dde_residual: 1e-10,
            antisymmetry: 1e-12,
            oracle_sup: 1e-8,
            event_time: 1e-10,
            return_time: 1e-8,
            fixed_point: 1e-12,
            k0_residual: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), Failure> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Failure::Usage(format!("tolerance {key} must be positive, got {value}")));
        }
        let slot = match key {
            "join" => &mut self.join,
            "dde_residual" => &mut self.dde_residual,
            "antisymmetry" => &mut self.antisymmetry,
            "oracle_sup" => &mut self.oracle_sup,
            "event_time" => &mut self.event_time,
            "return_time" => &mut self.return_time,
            "fixed_point" => &mut self.fixed_point,
            "k0_residual" => &mut self.k0_residual,
            _ => return Err(Failure::Usage(format!("unknown tolerance {key:?}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Contents of the config file. Every field is optional; flags win over it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub eps: Option<f64>,
    pub k: Option<String>,
    pub k_range: Option<String>,
    pub branch: Option<Branch>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub samples: Option<usize>,
    pub periods: Option<usize>,
    pub eps_grid: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("reading config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }

    /// The file named by [`CONFIG_ENV`], or an empty config when it is unset.
    pub fn from_env() -> Result<Self, Failure> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct FlagValues {
    pub eps: Option<f64>,
    pub k: Option<KSpec>,
    pub k_range: Option<KRange>,
    pub branch: Option<Branch>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub samples: Option<usize>,
    pub periods: Option<usize>,
    pub eps_grid: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub tolerances: Vec<(String, f64)>,
    pub json: bool,
    pub report: Option<PathBuf>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub eps: f64,
    pub k: Option<KSpec>,
    pub k_range: Option<KRange>,
    pub branch: Branch,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub format: Format,
    pub samples: usize,
    pub periods: usize,
    pub eps_grid: Vec<f64>,
    pub jobs: usize,
    pub json: bool,
    pub tolerances: Tolerances,
}

impl RunConfig {
    /// Merges flags over the config file over defaults, then validates.
    pub fn resolve(command: Command, flags: FlagValues, file: FileConfig) -> Result<Self, Failure> {
        let usage = Failure::Usage;
        let k = match (flags.k, &file.k) {
            (Some(k), _) => Some(k),
            (None, Some(s)) => Some(s.parse().map_err(usage)?),
            (None, None) => None,
        };
        let k_range = match (flags.k_range, &file.k_range) {
            (Some(r), _) => Some(r),
            (None, Some(s)) => Some(s.parse().map_err(usage)?),
            (None, None) => None,
        };
        let mut tolerances = Tolerances::default();
        for (key, v) in &file.tolerances {
            tolerances.set(key, *v)?;
        }
        for (key, v) in &flags.tolerances {
            tolerances.set(key, *v)?;
        }
        let cfg = RunConfig {
            command,
            eps: flags.eps.or(file.eps).unwrap_or(DEFAULT_EPS),
            k,
            k_range,
            branch: flags.branch.or(file.branch).unwrap_or(Branch::Lower),
            out: flags.out.or(file.out),
            report: flags.report,
            format: flags.format.or(file.format).unwrap_or(Format::Csv),
            samples: flags.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES),
            periods: flags.periods.or(file.periods).unwrap_or(DEFAULT_PERIODS),
            eps_grid: flags.eps_grid.or(file.eps_grid).unwrap_or_else(|| delayfold::asymptotics::DEFAULT_EPS_GRID.to_vec()),
            jobs: flags.jobs.or(file.jobs).unwrap_or(1),
            json: flags.json,
            tolerances,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let usage = |m: String| Err(Failure::Usage(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return usage(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if self.samples < 2 {
            return usage(format!("samples must be at least 2, got {}", self.samples));
        }
        if self.periods == 0 {
            return usage("periods must be at least 1".into());
        }
        if self.jobs == 0 {
            return usage("jobs must be at least 1".into());
        }
        match self.command {
            Command::Sweep if self.k_range.is_none() => usage("sweep needs --k-range lo:hi:n".into()),
            Command::Orbit if self.k.is_none() => usage("orbit needs --k".into()),
            Command::Verify if self.eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) => {
                usage(format!("every grid eps must lie in (0, 1), got {:?}", self.eps_grid))
            }
            _ => Ok(()),
        }
    }
}

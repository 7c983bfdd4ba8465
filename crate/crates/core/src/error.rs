use thiserror::Error;

/// Errors raised by the map, solver, orbit and integrator layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),

    /// `K + theta_6 <= 0`, so the logarithm defining `L_4` is undefined.
    #[error("derived-domain violation: K + theta6 = {0} <= 0")]
    DerivedDomain(f64),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),

    #[error("orbit construction undefined: {0}")]
    OutsideV(String),

    #[error("discontinuous join at offset {offset}: jump {jump:e}")]
    DiscontinuousJoin { offset: f64, jump: f64 },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("event cluster: crossings at {0} and {1} are closer than the merge tolerance")]
    EventCluster(f64, f64),

    #[error("degree overflow: re-anchoring failed at t = {0}")]
    DegreeOverflow(f64),

    #[error("no return to the section within T_max = {0}")]
    NoReturn(f64),

    #[error("invalid history: {0}")]
    InvalidHistory(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use std::fmt;

use delayfold::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Usage(String),
    Domain(String),
    Convergence(String),
    Certification(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 3,
            Failure::Convergence(_) => 4,
            Failure::Certification(_) => 5,
            Failure::Io(_) => 6,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Domain(m) => write!(f, "domain error: {m}"),
            Failure::Convergence(m) => write!(f, "convergence failure: {m}"),
            Failure::Certification(m) => write!(f, "certification failed: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Domain(_) | Error::DerivedDomain(_) | Error::OutsideV(_) | Error::InvalidHistory(_) => Failure::Domain(m),
            Error::NoBracket { .. }
            | Error::MaxIterations(_)
            | Error::EventCluster(..)
            | Error::DegreeOverflow(_)
            | Error::NoReturn(_) => Failure::Convergence(m),
            Error::DiscontinuousJoin { .. } | Error::Certification(_) => Failure::Certification(m),
        }
    }
}

use std::fmt;

use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::fseq::FseqError;
use crate::manifest::DataError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
    Infeasible = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn numerical(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Numerical, anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub fn core_kind(e: &beac_core::Error) -> ExitKind {
    use beac_core::Error as E;
    match e {
        E::InfeasiblePair { .. } | E::InfeasibleLength { .. } => ExitKind::Infeasible,
        E::Diverged { .. } | E::NonFiniteGradient(_) => ExitKind::Numerical,
        E::InvalidArgument(_) => ExitKind::Usage,
        _ => ExitKind::Data,
    }
}

impl From<beac_core::Error> for CliError {
    fn from(e: beac_core::Error) -> Self {
        Self::new(core_kind(&e), e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::new(ExitKind::Data, e)
    }
}

impl From<FseqError> for CliError {
    fn from(e: FseqError) -> Self {
        Self::new(ExitKind::Data, e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::new(ExitKind::Data, e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new(ExitKind::Usage, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ExitKind::Data, e)
    }
}

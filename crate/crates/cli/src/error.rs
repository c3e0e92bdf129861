use std::fmt;

use stnn_core::baselines::BaselineError;
use stnn_core::bestfit::FitError;
use stnn_core::dynsys::DynError;
use stnn_core::hankel::HankelError;
use stnn_core::linalg::LinalgError;
use stnn_core::stnn::StnnError;

/// Failure classes that map onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub stage: Option<&'static str>,
    pub config_hash: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            stage: None,
            config_hash: None,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Numerical,
            stage: None,
            config_hash: None,
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Config => 2,
            Kind::Numerical => 3,
        }
    }

    pub fn at(mut self, stage: &'static str, hash: &str) -> Self {
        self.stage.get_or_insert(stage);
        self.config_hash.get_or_insert_with(|| hash.to_string());
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Config => "config error",
            Kind::Numerical => "numerical failure",
        };
        write!(f, "{kind}")?;
        if let Some(s) = self.stage {
            write!(f, " in stage '{s}'")?;
        }
        if let Some(h) = &self.config_hash {
            write!(f, " (config {h})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::config(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::config(format!("csv: {e}"))
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        Self::numerical(e.to_string())
    }
}

impl From<DynError> for CliError {
    fn from(e: DynError) -> Self {
        match e {
            DynError::StepUnderflow { .. } | DynError::NonFinite { .. } => Self::numerical(e.to_string()),
            _ => Self::config(e.to_string()),
        }
    }
}

impl From<StnnError> for CliError {
    fn from(e: StnnError) -> Self {
        match e {
            StnnError::InvalidConfig(_)
            | StnnError::DimensionMismatch { .. }
            | StnnError::ParamCount { .. }
            | StnnError::EmptyBatch
            | StnnError::BatchTooLarge { .. } => Self::config(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Invalid(_)
            | BaselineError::Empty
            | BaselineError::DimensionMismatch { .. }
            | BaselineError::RankTooLarge { .. } => Self::config(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Linalg(_) => Self::numerical(e.to_string()),
            _ => Self::config(e.to_string()),
        }
    }
}

impl From<HankelError> for CliError {
    fn from(e: HankelError) -> Self {
        match e {
            HankelError::NonFinite { .. } => Self::numerical(e.to_string()),
            _ => Self::config(e.to_string()),
        }
    }
}

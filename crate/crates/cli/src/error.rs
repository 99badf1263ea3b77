use efo_fit::builder::BuildError;
use efo_fit::fuzzy::FuzzyError;
use efo_fit::kg::KgError;
use efo_fit::logic::LogicError;
use efo_fit::oracle::OracleError;
use efo_fit::sampler::SampleError;
use efo_fit::FitError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Limit(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Limit(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<LogicError> for CliError {
    fn from(e: LogicError) -> Self {
        match e {
            LogicError::TooManyClauses(_) => CliError::Limit(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Logic(l) => l.into(),
            FitError::EnumerationDepth(_) => CliError::Limit(e.to_string()),
            FitError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::LimitExceeded { .. } => CliError::Limit(e.to_string()),
            OracleError::Logic(l) => l.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SampleError> for CliError {
    fn from(e: SampleError) -> Self {
        match e {
            SampleError::UnknownStructure(_) => CliError::Usage(e.to_string()),
            SampleError::Oracle(o) => o.into(),
            SampleError::Logic(l) => l.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<FuzzyError> for CliError {
    fn from(e: FuzzyError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

use std::fmt;
use std::path::Path;

use meshwalk::eval::EvalError;
use meshwalk::manifest::ManifestError;
use meshwalk::mesh::ParseError;
use meshwalk::pipeline::{ConfigError, PipelineError};
use meshwalk::resample::ResampleError;

/// A failure, classified by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 1).
    Config(String),
    /// Unreadable or malformed input data, or I/O failure (exit 2).
    Data(String),
    /// Numeric divergence (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ResampleError> for CliError {
    fn from(e: ResampleError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match e {
            PipelineError::Config(_) | PipelineError::ConfigMismatch | PipelineError::DatasetTooSmall { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) => CliError::Config(e.to_string()),
            EvalError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_errors_map_to_exit_codes() {
        let nan = PipelineError::NonFinite { epoch: 2, what: "loss".into() };
        let at_batch = CliError::from(PipelineError::AtBatch { epoch: 2, batch: 0, source: Box::new(nan) });
        assert_eq!(at_batch.exit_code(), 3);
        assert_eq!(CliError::from(PipelineError::ConfigMismatch).exit_code(), 1);
        assert_eq!(CliError::from(PipelineError::Io("disk".into())).exit_code(), 2);
        assert_eq!(CliError::from(EvalError::NoQueries).exit_code(), 2);
    }
}

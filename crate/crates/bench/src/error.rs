use thiserror::Error;

/// Failures of the benchmark driver, split by exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad configuration or arguments (exit code 2).
    #[error("config error: {0}")]
    Config(String),
    /// Anything that goes wrong after the configuration was accepted (exit code 3).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

impl From<vrcrpn::Error> for BenchError {
    fn from(e: vrcrpn::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn config_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Config(e.to_string())
}

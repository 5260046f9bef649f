use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("no run outputs (summary.json) under {0}")]
    MissingResults(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Numerical(_) => "NumericalFailure",
            CliError::MissingResults(_) => "MissingResults",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}

impl From<std::io::Error> for CliError {
    // the output directory must be writable, which is part of a valid config
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

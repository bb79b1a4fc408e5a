use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    /// Raised by `dominance` after the report has been written.
    #[error("the operator is not c-diagonally block dominant")]
    NonDominant,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::NonDominant => 4,
        }
    }
}

impl From<mlwg_core::Error> for CliError {
    fn from(e: mlwg_core::Error) -> Self {
        use mlwg_core::Error as E;
        match e {
            E::InvalidPartition(_)
            | E::SizeMismatch { .. }
            | E::InvalidParameter { .. }
            | E::BlockOutOfRange { .. } => CliError::Validation(e.to_string()),
            E::NonConvergence { .. }
            | E::NonFinite(_)
            | E::Diagnostics(_)
            | E::ChainAborted { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<spdekit::Error> for CliError {
    fn from(e: spdekit::Error) -> Self {
        use spdekit::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::NotPositiveDefinite { .. } | E::NoConvergence(_) | E::NoFeasibleTheta => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

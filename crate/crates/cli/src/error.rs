use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Universe { path: PathBuf, source: kelly_core::Error },

    #[error(transparent)]
    Core(#[from] kelly_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for configuration problems, 3 when a solver fails to converge, 1 for
    /// I/O and internal failures.
    pub fn exit_code(&self) -> i32 {
        use kelly_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Universe { .. } => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::NotConverged { .. } | E::NoRoot(_) => 3,
                E::Io(_) | E::Internal(_) => 1,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let not_converged = kelly_core::Error::NotConverged {
            iterations: 1,
            residual: 1.0,
            best: vec![],
        };
        assert_eq!(CliError::from(not_converged).exit_code(), 3);
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::from(kelly_core::Error::EmptyUniverse).exit_code(), 2);
        let io = std::io::Error::other("disk");
        assert_eq!(
            CliError::Io {
                path: "f".into(),
                source: io
            }
            .exit_code(),
            1
        );
    }
}

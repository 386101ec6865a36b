use otm_core::Error;
use thiserror::Error as ThisError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SETUP: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq, ThisError)]
pub enum CliError {
    /// Bad arguments, unreadable or inconsistent inputs.
    #[error("{0}")]
    Setup(String),
    /// The solve started but broke down numerically.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Setup(_) => EXIT_SETUP,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// Core errors raised while building the problem: always setup errors.
    pub fn setup(e: Error) -> Self {
        CliError::Setup(e.to_string())
    }

    /// Core errors raised inside a solver run.
    pub fn from_solve(e: Error) -> Self {
        let numerical = match &e {
            Error::Convergence { .. }
            | Error::Overflow { .. }
            | Error::BoundaryPoint { .. }
            | Error::Structural { .. } => true,
            Error::Validation(msg) => msg.contains("produced a non-finite") || msg.contains("gradient has non-finite"),
            _ => false,
        };
        if numerical {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Setup(e.to_string())
        }
    }
}

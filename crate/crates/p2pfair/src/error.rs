use std::path::PathBuf;

use p2pfair_core::lp::LpStatus;

pub type AppResult<T> = std::result::Result<T, AppError>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Model(#[from] p2pfair_core::Error),
    #[error("{count} fair run(s) stopped at the iteration cap without converging")]
    NotConverged { count: usize },
}

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const BAD_INPUT: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const NOT_CONVERGED: u8 = 4;
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        use p2pfair_core::Error as E;
        match self {
            AppError::Io { .. } => exit::IO,
            AppError::Format { .. } | AppError::BadInput(_) => exit::BAD_INPUT,
            AppError::NotConverged { .. } => exit::NOT_CONVERGED,
            AppError::Model(e) => match e {
                E::Solver { status, .. } | E::ReferenceNotOptimal(status) => match status {
                    LpStatus::Infeasible | LpStatus::Unbounded => exit::INFEASIBLE,
                    _ => exit::NOT_CONVERGED,
                },
                _ => exit::BAD_INPUT,
            },
        }
    }
}

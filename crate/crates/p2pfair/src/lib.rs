//! Scenario files, result formats, report tables and the command-line
//! driver around `p2pfair_core`.

pub mod app;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod run;

pub use error::{AppError, AppResult};

//! Command-line front end: file formats, synthetic instances, solver runs
//! with trace output, and the geometry self-checks.

pub mod app;
pub mod error;
pub mod io;
pub mod problem;
pub mod solve;

pub use app::{main_with, OUT_DIR_ENV};
pub use error::CliError;

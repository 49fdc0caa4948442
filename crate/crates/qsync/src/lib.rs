//! File formats, configuration, the experiment harness and the command line
//! for `qsync-core`.

pub mod cli;
pub mod config_file;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod session_io;

pub use error::{AppError, AppResult};

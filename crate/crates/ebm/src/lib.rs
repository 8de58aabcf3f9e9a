//! File formats, configuration and run orchestration for the `ebm` command.

pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use config::TrainConfig;
pub use error::{HarnessError, Result};

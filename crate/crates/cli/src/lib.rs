//! Library half of the `demand-pulse` binary: configuration loading,
//! the pipeline stages, and the run manifest. Kept as a library so the
//! integration tests can drive stages without spawning processes.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::PipelineConfig;
pub use error::CliError;

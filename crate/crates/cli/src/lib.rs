//! Reproducible experiment runner for the `sodesync` toolkit.
//!
//! A TOML config names one experiment; running it writes CSV artifacts and a
//! `summary.json` whose status maps to the process exit code.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{parse_config, ConfigIssue, Experiment, ExperimentConfig, Tolerances, SCHEMA};
pub use experiments::run_experiment;
pub use output::{RunSummary, Status};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SODESYNC_OUTPUT_DIR";

/// Exit code for usage, configuration and I/O errors.
pub const EXIT_USAGE: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{} configuration error(s):\n{}", .0.len(), format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("cannot build the system: {0}")]
    Setup(sodesync::SyncError),

    #[error("seed {seed}: {source}")]
    Run { seed: u64, source: sodesync::SyncError },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

/// Output directory: the explicit flag, then the config, then the
/// environment, then `sodesync-out`.
pub fn resolve_output_dir(flag: Option<&Path>, config: &ExperimentConfig, env: Option<&str>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sodesync-out"))
}

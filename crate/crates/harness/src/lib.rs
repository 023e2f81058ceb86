//! Experiment configuration, end-to-end runs, ablation sweeps and the
//! `clam` command-line tool.

mod ablation;
mod config;
mod error;
mod experiment;

pub use ablation::{
    mean_sd, run_ablation, summarize, AblationResult, AblationRow, Runner, Study, SummaryRow, ABLATION_HEADER,
    SUMMARY_HEADER,
};
pub use config::{EnvConfig, ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use experiment::{
    generate_shared, run_experiment, write_diagnostics_csv, write_loss_csv, ExperimentReport, SharedData,
    EPISODES_HEADER,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CLAM_OUTPUT_ROOT";

/// `$CLAM_OUTPUT_ROOT`, or `clam-output` in the working directory.
pub fn output_root() -> std::path::PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(Into::into)
        .unwrap_or_else(|| "clam-output".into())
}

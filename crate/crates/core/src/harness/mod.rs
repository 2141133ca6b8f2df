//! Configuration files, single runs, ε-sweeps, long-time studies, and
//! their artifacts on disk (diagnostics table, binary snapshots, manifest,
//! SVG plots).

mod config;
pub mod io;
mod plots;
mod run;

pub use config::{DiagnosticsConfig, DtSetting, OutputConfig, OutputFormat, ProblemConfig, ResolvedRun, RunConfig, TimeConfig};
pub use io::{RunManifest, RunStatus};
pub use plots::{emit_plots, render_heatmap, render_line_plot, LinePlot, PLOT_DIR, WINDOW_COLUMNS};
pub use run::{
    default_workers, resolve_output_dir, run_epsilon_sweep, run_in, run_longtime_study, run_single, trajectory_distance,
    write_ode_suite_csv, LongtimeReport, RunOutcome, SweepReport, LONGTIME_REPORT_FILE, OUTPUT_ROOT_ENV, SWEEP_REPORT_FILE,
    SWEEP_SLACK,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) => 1,
        }
    }
}

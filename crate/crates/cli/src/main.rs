use std::fs::File;
use std::io::{self, BufWriter};
use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mlab_core::harness::{
    default_workers, emit_plots, run_epsilon_sweep, run_longtime_study, run_single, write_ode_suite_csv, HarnessError,
    RunConfig,
};
use mlab_core::odebounds::{run_suite, OdeError};

#[derive(Parser)]
#[command(name = "mlab", version, about = "Consumption chemotaxis simulator with signal-dependent motility")]
#[command(after_help = "Relative output directories are placed under $MLAB_OUTPUT_ROOT when it is set.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write diagnostics, snapshots and a manifest.
    Run {
        config: PathBuf,
        /// Output directory, replacing the one in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trajectory per epsilon and compare neighbours.
    Sweep {
        config: PathBuf,
        /// Nonincreasing comma-separated values, e.g. 1,0.25,0.0625,0
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        eps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run once and report when the solution settles below each threshold.
    Longtime {
        config: PathBuf,
        /// Comma-separated thresholds, e.g. 0.5,0.1,0.02
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        eta: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Differential-inequality bound checks.
    Odebounds {
        #[command(subcommand)]
        action: OdeAction,
    },
    /// Render SVG plots for a finished run directory.
    Plots { dir: PathBuf },
}

#[derive(Subcommand)]
enum OdeAction {
    /// Check every bound kind for each seed and print a CSV table.
    Verify {
        /// Half-open seed range `a..b`.
        #[arg(long, value_parser = parse_seed_range)]
        seed_range: Range<u64>,
        /// RK4 steps per problem (at least 1000).
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long)]
        workers: Option<usize>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_seed_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
    if a >= b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..b)
}

fn load(config: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut c = RunConfig::load(config)?;
    if let Some(dir) = out {
        c.output.directory = dir;
    }
    Ok(c)
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, out } => {
            let outcome = run_single(&load(&config, out)?)?;
            let m = &outcome.manifest;
            println!("{}: {:?} after {} steps (dt = {})", outcome.dir.display(), m.status, m.steps_completed, m.dt);
            for c in &m.checks {
                println!("  {:<16} {:>12.3e}  tol {:.1e}  {}", c.name, c.value, c.tolerance, if c.passed { "ok" } else { "FAILED" });
            }
            if let Some(e) = &m.error {
                eprintln!("{e}");
            }
            Ok(outcome.exit_code())
        }
        Command::Sweep { config, eps, out, workers } => {
            let report = run_epsilon_sweep(&load(&config, out)?, &eps, workers.unwrap_or_else(default_workers))?;
            for (j, d) in report.distances.iter().enumerate() {
                println!("d_{j} (eps {} vs {}) = {d:.6e}", report.eps_list[j], report.eps_list[j + 1]);
            }
            println!("monotone within {:.0}%: {}", 100.0 * report.slack, report.passed);
            Ok(report.exit_code())
        }
        Command::Longtime { config, eta, out } => {
            let report = run_longtime_study(&load(&config, out)?, &eta)?;
            let show = |t: Option<f64>| t.map_or("not reached".to_string(), |t| format!("{t}"));
            for (v, u) in report.v_crossings.iter().zip(&report.u_crossings) {
                println!("eta {}: sup v settles at {}, |u - mean| settles at {}", v.threshold, show(v.time), show(u.time));
            }
            Ok(report.status.exit_code())
        }
        Command::Odebounds { action: OdeAction::Verify { seed_range, steps, workers, output } } => {
            let rows = run_suite(seed_range, steps, workers.unwrap_or_else(default_workers))?;
            match output {
                Some(path) => {
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_ode_suite_csv(BufWriter::new(file), &rows)?;
                }
                None => write_ode_suite_csv(io::stdout().lock(), &rows)?,
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            eprintln!("{} of {} verifications passed", rows.len() - failed, rows.len());
            Ok(if failed == 0 { 0 } else { 4 })
        }
        Command::Plots { dir } => {
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            let files = emit_plots(&dir)?;
            println!("wrote {} plot files to {}", files.len(), dir.join("plots").display());
            Ok(0)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return h.exit_code() as u8;
    }
    if err.downcast_ref::<OdeError>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

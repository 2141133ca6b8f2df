use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::io::{
    snapshot_path, write_diagnostics_csv, write_json, write_snapshot, RunManifest, RunStatus, DIAGNOSTICS_FILE,
    MANIFEST_FILE, SNAPSHOT_DIR,
};
use super::{emit_plots, HarnessError, OutputFormat, RunConfig};
use crate::diagnostics::{stabilization_metrics, DiagnosticsRecord, Recorder, ThresholdCrossing};
use crate::odebounds::SuiteRow;
use crate::solver::SolverRegistry;
use crate::stepper::{run, step_count, InvariantMonitor, Observer, RunOptions, SimState, Stepper};

/// Overrides the base directory for relative output paths.
pub const OUTPUT_ROOT_ENV: &str = "MLAB_OUTPUT_ROOT";

pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn mkdir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<DiagnosticsRecord>,
    /// Snapshot states, kept only when requested.
    pub snapshots: Vec<SimState>,
}

impl RunOutcome {
    pub fn status(&self) -> RunStatus {
        self.manifest.status
    }

    pub fn exit_code(&self) -> i32 {
        self.manifest.status.exit_code()
    }
}

/// Writes snapshot files at a fixed step cadence and optionally keeps the
/// states in memory.
struct SnapshotSink<'a> {
    dir: &'a Path,
    cadence: Option<usize>,
    write: bool,
    retain: bool,
    last_step: Option<usize>,
    written: Vec<String>,
    kept: Vec<SimState>,
    error: Option<HarnessError>,
}

impl SnapshotSink<'_> {
    fn save(&mut self, state: &SimState, step: usize) {
        if self.error.is_some() || self.last_step == Some(step) {
            return;
        }
        self.last_step = Some(step);
        if self.write {
            let path = snapshot_path(self.dir, step);
            match write_snapshot(&path, state) {
                Ok(()) => self.written.push(format!("{SNAPSHOT_DIR}/{}", path.file_name().unwrap().to_string_lossy())),
                Err(e) => self.error = Some(e),
            }
        }
        if self.retain {
            self.kept.push(state.clone());
        }
    }
}

impl Observer for SnapshotSink<'_> {
    fn observe(&mut self, state: &SimState, step: usize) {
        if self.cadence.is_some_and(|c| step % c == 0) {
            self.save(state, step);
        }
    }
}

/// One trajectory with all artifacts in the configured output directory.
pub fn run_single(config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let dir = resolve_output_dir(&config.output.directory);
    run_in(config, &dir, &SolverRegistry::default(), false)
}

/// [`run_single`] into an explicit directory. A configuration error is
/// returned before anything is written; every other outcome, including a
/// solver failure or an invariant violation, leaves a manifest behind.
pub fn run_in(
    config: &RunConfig,
    dir: &Path,
    registry: &SolverRegistry,
    retain_snapshots: bool,
) -> Result<RunOutcome, HarnessError> {
    let started = unix_now();
    let resolved = config.resolve(registry)?;
    let problem = &resolved.problem;
    mkdir(dir)?;
    let write_snapshots = config.wants(OutputFormat::Snapshots);
    if write_snapshots {
        mkdir(&dir.join(SNAPSHOT_DIR))?;
    }
    let solver = registry.create(&resolved.solver, &problem.grid).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut stepper = Stepper::new(&problem.grid, problem.phi.clone(), resolved.params.clone(), solver)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let steps_planned = step_count(resolved.t_end, resolved.params.dt);

    let recorder = Recorder::new(&problem.grid, resolved.record.clone(), resolved.cadence);
    let monitor = InvariantMonitor::new(problem);
    let sink = SnapshotSink {
        dir,
        cadence: config.output.snapshot_cadence,
        write: write_snapshots,
        retain: retain_snapshots,
        last_step: None,
        written: Vec::new(),
        kept: Vec::new(),
        error: None,
    };
    let mut observers = (recorder, (monitor, sink));
    let options = RunOptions { observe_every: 1, store_every: None };
    let result = run(problem, resolved.t_end, &mut stepper, &options, &mut observers);
    let (recorder, (monitor, mut sink)) = observers;

    let mut error = None;
    let mut steps_completed = 0;
    match &result {
        Ok(traj) => {
            steps_completed = traj.steps;
            sink.save(&traj.final_state, traj.steps);
        }
        Err(e) => error = Some(e.to_string()),
    }
    if let Some(e) = recorder.error() {
        error.get_or_insert_with(|| format!("diagnostics: {e}"));
    }
    if let Some(e) = sink.error.take() {
        return Err(e);
    }
    let records = recorder.into_records().unwrap_or_default();
    if config.wants(OutputFormat::Csv) {
        write_diagnostics_csv(&dir.join(DIAGNOSTICS_FILE), &records, &resolved.record.p_list)?;
    }
    let checks = monitor.checks(resolved.params.solver_tol);
    let status = if error.is_some() {
        RunStatus::SolverFailure
    } else if checks.iter().any(|c| !c.passed) {
        RunStatus::InvariantViolation
    } else {
        RunStatus::Passed
    };
    if status == RunStatus::InvariantViolation {
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| format!("{} = {:e}", c.name, c.value)).collect();
        error = Some(format!("invariant violated: {}", failed.join(", ")));
    }
    if config.wants(OutputFormat::Svg) && config.wants(OutputFormat::Csv) {
        emit_plots(dir)?;
    }
    let manifest = RunManifest {
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: unix_now(),
        dt: resolved.params.dt,
        steps_planned,
        steps_completed,
        solver: resolved.solver.clone(),
        motility_bounds: problem.motility_bounds(),
        weighted_params: resolved.record.weighted,
        final_record: records.last().cloned(),
        checks,
        status,
        error,
        snapshots: sink.written,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome { dir: dir.to_path_buf(), manifest, records, snapshots: sink.kept })
}

/// Relative slack on the monotone-distance contract of a sweep.
pub const SWEEP_SLACK: f64 = 0.1;
pub const SWEEP_REPORT_FILE: &str = "sweep_report.json";
/// Snapshots per member when the configuration sets no cadence.
const SWEEP_DEFAULT_SNAPSHOTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub eps_list: Vec<f64>,
    pub member_dirs: Vec<PathBuf>,
    pub member_status: Vec<RunStatus>,
    pub snapshot_times: Vec<f64>,
    /// `d_j = max_t ‖u_j − u_{j+1}‖_{L²} + ‖v_j − v_{j+1}‖_∞` over snapshot
    /// times.
    pub distances: Vec<f64>,
    pub slack: f64,
    /// Every member passed and `d_{j+1} ≤ (1 + slack) d_j`.
    pub passed: bool,
}

impl SweepReport {
    pub fn exit_code(&self) -> i32 {
        if self.member_status.contains(&RunStatus::SolverFailure) {
            3
        } else if self.passed {
            0
        } else {
            4
        }
    }
}

pub fn trajectory_distance(a: &SimState, b: &SimState) -> f64 {
    let g = a.grid();
    let du: Vec<f64> = a.u.values().iter().zip(b.u.values()).map(|(x, y)| (x - y) * (x - y)).collect();
    let dv = a.v.values().iter().zip(b.v.values()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    g.integrate_slice(&du).sqrt() + dv
}

/// One trajectory per `ε` (nonincreasing list, equal neighbours allowed) on
/// the same grid and time step, run in parallel; members write into
/// `eps_<j>` below the output directory.
pub fn run_epsilon_sweep(config: &RunConfig, eps_list: &[f64], workers: usize) -> Result<SweepReport, HarnessError> {
    if eps_list.len() < 2 {
        return Err(HarnessError::Config("an epsilon sweep needs at least two values".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(HarnessError::Config(format!("epsilon values must be nonnegative (got {e})")));
    }
    if eps_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(HarnessError::Config("epsilon list must be nonincreasing".into()));
    }
    let registry = SolverRegistry::default();
    let resolved = config.resolve(&registry)?;
    let base = resolve_output_dir(&config.output.directory);
    mkdir(&base)?;
    let steps = step_count(resolved.t_end, resolved.params.dt);
    let cadence = config.output.snapshot_cadence.unwrap_or((steps / SWEEP_DEFAULT_SNAPSHOTS).max(1));

    let members: Vec<(PathBuf, RunConfig)> = eps_list
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let mut c = config.clone();
            c.problem.epsilon = eps;
            c.output.snapshot_cadence = Some(cadence);
            c.output.directory = base.join(format!("eps_{j}"));
            (c.output.directory.clone(), c)
        })
        .collect();
    let outcomes = parallel_map(&members, workers, |(dir, c)| run_in(c, dir, &registry, true))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let snapshot_times: Vec<f64> = outcomes[0].snapshots.iter().map(|s| s.t).collect();
    let distances: Vec<f64> = outcomes
        .windows(2)
        .map(|pair| {
            pair[0].snapshots.iter().zip(&pair[1].snapshots).map(|(a, b)| trajectory_distance(a, b)).fold(0.0, f64::max)
        })
        .collect();
    let member_status: Vec<RunStatus> = outcomes.iter().map(|o| o.status()).collect();
    let complete = outcomes.iter().all(|o| o.snapshots.len() == snapshot_times.len());
    let monotone = distances.windows(2).all(|w| w[1] <= (1.0 + SWEEP_SLACK) * w[0]);
    let report = SweepReport {
        eps_list: eps_list.to_vec(),
        member_dirs: members.into_iter().map(|(d, _)| d).collect(),
        passed: complete && monotone && member_status.iter().all(|s| *s == RunStatus::Passed),
        member_status,
        snapshot_times,
        distances,
        slack: SWEEP_SLACK,
    };
    write_json(&base.join(SWEEP_REPORT_FILE), &report)?;
    Ok(report)
}

/// Apply `f` to every item on up to `workers` threads, preserving order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("worker finished every item")).collect()
}

pub const LONGTIME_REPORT_FILE: &str = "longtime_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongtimeReport {
    pub eta_list: Vec<f64>,
    pub mean_u0: f64,
    pub final_t: f64,
    pub final_stab_u: f64,
    pub final_stab_v: f64,
    /// `T(η)` for `‖v‖∞ ≤ η`.
    pub v_crossings: Vec<ThresholdCrossing>,
    /// The same for `‖u − ū0‖∞ ≤ η`.
    pub u_crossings: Vec<ThresholdCrossing>,
    pub status: RunStatus,
}

/// Run once and report, per threshold, the first recorded time from which
/// each stabilization metric stays below it.
pub fn run_longtime_study(config: &RunConfig, eta_list: &[f64]) -> Result<LongtimeReport, HarnessError> {
    if eta_list.is_empty() {
        return Err(HarnessError::Config("eta list is empty".into()));
    }
    if let Some(e) = eta_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(HarnessError::Config(format!("eta values must be positive (got {e})")));
    }
    let outcome = run_single(config)?;
    let report = stabilization_metrics(&outcome.records, eta_list, eta_list);
    let last = outcome.records.last();
    let longtime = LongtimeReport {
        eta_list: eta_list.to_vec(),
        mean_u0: config.build_problem()?.mean_u0(),
        final_t: last.map_or(0.0, |r| r.t),
        final_stab_u: last.map_or(f64::NAN, |r| r.stab_u),
        final_stab_v: last.map_or(f64::NAN, |r| r.stab_v),
        v_crossings: report.v_crossings,
        u_crossings: report.u_crossings,
        status: outcome.status(),
    };
    write_json(&outcome.dir.join(LONGTIME_REPORT_FILE), &longtime)?;
    Ok(longtime)
}

/// Pass/fail table of the randomized ODE-bound suite.
pub fn write_ode_suite_csv<W: Write>(out: W, rows: &[SuiteRow]) -> Result<(), HarnessError> {
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "kind",
        "seed",
        "a",
        "b",
        "lambda",
        "y0",
        "max_excess",
        "max_relative_excess",
        "richardson_diff",
        "passed",
    ])
    .map_err(err)?;
    for r in rows {
        let p = &r.report.problem;
        w.write_record([
            r.kind.name().to_string(),
            r.seed.to_string(),
            format!("{:.16e}", p.a),
            format!("{:.16e}", p.b),
            format!("{:.16e}", p.lambda),
            format!("{:.16e}", p.y0),
            format!("{:.16e}", r.report.max_excess),
            format!("{:.16e}", r.report.max_relative_excess),
            r.richardson_diff.map(|d| format!("{d:.16e}")).unwrap_or_default(),
            r.passed.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

use std::path::Path;

use mlab_core::harness::io::{list_snapshots, read_diagnostics_csv, read_manifest, read_snapshot};
use mlab_core::harness::{
    emit_plots, run_epsilon_sweep, run_in, run_longtime_study, DtSetting, HarnessError, OutputFormat, RunConfig,
    RunStatus,
};
use mlab_core::model::InitialData;
use mlab_core::solver::{LinearSolver, ShiftedSystem, SolveError, SolveStats, SolverRegistry};

fn base_config(dir: &Path) -> RunConfig {
    let mut c = RunConfig::from_toml(
        r#"
[problem]
grid = { dim = 1, extents = [1.0], cells = [32] }
motility = { family = "exp_decay", params = [1.0, 0.5] }
epsilon = 0.1
u0 = { kind = "gaussian", center = [0.4], width = 0.1, amplitude = 1.0 }
v0 = { kind = "constant", value = 1.0 }
u_mass = 1.0

[time]
t_end = 0.5
dt = 1e-2

[diagnostics]
cadence = 3

[output]
snapshot_cadence = 10
formats = ["csv", "snapshots"]
"#,
    )
    .unwrap();
    c.output.directory = dir.to_path_buf();
    c
}

fn go(c: &RunConfig) -> mlab_core::harness::RunOutcome {
    run_in(c, &c.output.directory, &SolverRegistry::default(), false).unwrap()
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let c = RunConfig::load(&path).unwrap();
        c.resolve(&SolverRegistry::default()).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 2);
}

#[test]
fn row_count_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let c = base_config(tmp.path());
    let out = go(&c);
    assert_eq!(out.status(), RunStatus::Passed);
    let steps = 50;
    let table = read_diagnostics_csv(&tmp.path().join("diagnostics.csv")).unwrap();
    assert_eq!(table.rows.len(), steps / 3 + 1);
    // cadence 10 plus the final state at step 50, which is on the cadence
    let snaps = list_snapshots(tmp.path()).unwrap();
    assert_eq!(snaps.len(), 6);
    let last = read_snapshot(snaps.last().unwrap()).unwrap();
    assert!((last.t - 0.5).abs() < 1e-12);
    assert_eq!(last.epsilon, 0.1);
    let m = read_manifest(tmp.path()).unwrap();
    assert_eq!(m.status, RunStatus::Passed);
    assert_eq!(m.steps_completed, steps);
    assert_eq!(m.config, c);
    assert!(m.finished >= m.started);
    assert_eq!(m.checks.len(), 3);
}

#[test]
fn final_snapshot_written_off_cadence() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.output.snapshot_cadence = Some(7);
    go(&c);
    let names: Vec<String> = list_snapshots(tmp.path())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.last().unwrap(), "snap_00000050.bin");
    // steps 0, 7, ..., 49 and the final step
    assert_eq!(names.len(), 9);
}

#[test]
fn uniform_u_without_signal_stays_at_equilibrium() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.problem.u0 = InitialData::Constant { value: 2.0 };
    c.problem.v0 = InitialData::Constant { value: 0.0 };
    c.problem.u_mass = None;
    c.time.t_end = 1.0;
    let out = go(&c);
    assert_eq!(out.exit_code(), 0);
    let table = read_diagnostics_csv(&tmp.path().join("diagnostics.csv")).unwrap();
    for col in ["stab_u", "stab_v"] {
        assert!(table.column(col).unwrap().iter().all(|x| *x == Some(0.0)), "{col}");
    }
}

#[test]
fn canonical_1d_conserves_mass() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical_1d.toml");
    let tmp = tempfile::tempdir().unwrap();
    let mut c = RunConfig::load(&path).unwrap();
    c.output.directory = tmp.path().to_path_buf();
    c.output.formats = vec![OutputFormat::Csv];
    let out = go(&c);
    assert_eq!(out.status(), RunStatus::Passed);
    let mass = read_diagnostics_csv(&tmp.path().join("diagnostics.csv")).unwrap().column("mass_u").unwrap();
    let m0 = mass[0].unwrap();
    for m in mass {
        assert!((m.unwrap() - m0).abs() <= 1e-10 * m0);
    }
}

#[test]
fn bad_time_step_is_a_config_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(&tmp.path().join("out"));
    c.time.dt = DtSetting::Fixed(-1.0);
    let err = run_in(&c, &c.output.directory, &SolverRegistry::default(), false).unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(!tmp.path().join("out").exists());
}

/// Returns `1.5 · rhs / α` and claims convergence.
struct Overshoot;

impl LinearSolver for Overshoot {
    fn name(&self) -> &str {
        "overshoot"
    }
    fn handles_nonsymmetric(&self) -> bool {
        true
    }
    fn solve(&mut self, s: &ShiftedSystem<'_>, rhs: &[f64], x: &mut [f64], _: f64, _: usize) -> Result<SolveStats, SolveError> {
        for ((xi, b), a) in x.iter_mut().zip(rhs).zip(s.alpha) {
            *xi = 1.5 * b / a;
        }
        Ok(SolveStats { iterations: 1, relative_residual: 0.0 })
    }
}

#[test]
fn invariant_violation_still_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.time.solver = "overshoot".into();
    let mut reg = SolverRegistry::default();
    reg.register("overshoot", |_| Box::new(Overshoot));
    let out = run_in(&c, tmp.path(), &reg, false).unwrap();
    assert_eq!(out.status(), RunStatus::InvariantViolation);
    assert_eq!(out.exit_code(), 4);
    let m = read_manifest(tmp.path()).unwrap();
    assert_eq!(m.status, RunStatus::InvariantViolation);
    assert!(m.checks.iter().any(|c| c.name == "v_sup_monotone" && !c.passed));
    assert!(m.error.unwrap().contains("v_sup_monotone"));
    assert!(tmp.path().join("diagnostics.csv").is_file());
}

#[test]
fn solver_failure_exits_three_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.problem.grid.cells = vec![256];
    c.time.solver = "cg".into();
    c.time.max_iters = Some(1);
    let out = go(&c);
    assert_eq!(out.status(), RunStatus::SolverFailure);
    assert_eq!(out.exit_code(), 3);
    let m = read_manifest(tmp.path()).unwrap();
    assert!(m.error.unwrap().contains("solve failed"));
    assert!(m.steps_completed < 50);
}

#[test]
fn identical_epsilons_give_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let c = base_config(tmp.path());
    let report = run_epsilon_sweep(&c, &[0.5, 0.5], 2).unwrap();
    assert_eq!(report.distances, vec![0.0]);
    assert!(report.passed);
    assert!(tmp.path().join("sweep_report.json").is_file());
    assert!(tmp.path().join("eps_1").join("manifest.json").is_file());
}

#[test]
fn sweep_rejects_increasing_list() {
    let tmp = tempfile::tempdir().unwrap();
    let c = base_config(tmp.path());
    assert!(matches!(run_epsilon_sweep(&c, &[0.1, 0.5], 1), Err(HarnessError::Config(_))));
    assert!(run_epsilon_sweep(&c, &[0.1], 1).is_err());
}

#[test]
fn sweep_distances_decrease_with_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.time.t_end = 1.0;
    let report = run_epsilon_sweep(&c, &[1.0, 0.25, 0.0625, 0.0], 4).unwrap();
    assert!(report.passed, "{:?}", report.distances);
    assert!(report.distances[2] <= report.distances[0] / 4.0, "{:?}", report.distances);
}

#[test]
fn longtime_without_signal_settles_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.problem.v0 = InitialData::Constant { value: 0.0 };
    let r = run_longtime_study(&c, &[0.5, 0.1]).unwrap();
    assert!(r.v_crossings.iter().all(|x| x.time == Some(0.0)));
}

/// Uniform data stays uniform; `v` then follows the scalar recursion
/// `v_{n+1} = v_n / (1 + dt u/(1 + ε u))` of the implicit scheme.
#[test]
fn longtime_uniform_decay_time() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.problem.u0 = InitialData::Constant { value: 1.0 };
    c.problem.u_mass = None;
    c.problem.epsilon = 0.0;
    c.time.dt = DtSetting::Fixed(1e-3);
    c.time.t_end = 3.0;
    c.diagnostics.cadence = 1;
    c.output.formats = vec![OutputFormat::Csv];
    let r = run_longtime_study(&c, &[0.1]).unwrap();
    let (dt, mut v, mut n) = (1e-3, 1.0_f64, 0);
    while v > 0.1 {
        v /= 1.0 + dt;
        n += 1;
    }
    let t = r.v_crossings[0].time.unwrap();
    assert!((t - n as f64 * dt).abs() < 1e-9, "{t} vs {}", n as f64 * dt);
    assert!((t - 10f64.ln()).abs() < 0.01);
}

#[test]
fn plots_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config(tmp.path());
    c.problem.grid = mlab_core::grid::GridSpec { dim: 2, extents: vec![1.0, 1.0], cells: vec![8, 8] };
    c.problem.u0 = InitialData::Gaussian { center: vec![0.5, 0.5], width: 0.2, amplitude: 1.0 };
    go(&c);
    let first = emit_plots(tmp.path()).unwrap();
    let bytes: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert!(bytes.iter().all(|b| b.len() > 100));
    // 4 time series, 5 window curves, 3 snapshots times u and v
    assert_eq!(first.len(), 4 + 5 + 6);
    let second = emit_plots(tmp.path()).unwrap();
    assert_eq!(first, second);
    for (p, b) in second.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(p).unwrap(), b);
    }
}

#[test]
fn plots_need_a_diagnostics_table() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(emit_plots(tmp.path()).is_err());
}

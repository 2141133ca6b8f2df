//! Linearly implicit time stepping.
//!
//! One step is two backward-Euler solves with frozen coefficients:
//!
//! ```text
//! (I − dt L D) u⁺ = uⁿ,                  D = diag φ(vⁿ)
//! (I − dt L + dt diag c(u⁺)) v⁺ = vⁿ,    c(u) = u / (1 + ε u)
//! ```
//!
//! Both matrices are M-matrices, so `u⁺, v⁺ ≥ 0` and `max v⁺ ≤ max vⁿ`. The
//! u-update is written back in flux form, `u⁺ = uⁿ + dt L(D u⁺)`, so the
//! discrete mass is conserved to round-off independently of how tightly the
//! linear system was solved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::model::{consumption_coefficient, MotilityBounds, MotilitySpec, ProblemSpec};
use crate::solver::{LinearSolver, ShiftedSystem, SolveError, SolveStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("{stage}-stage solve failed at t = {t}: {source}")]
    Solve { stage: Stage, t: f64, source: SolveError },
    #[error("non-finite values produced in the {stage}-stage at t = {t}")]
    NonFinite { stage: Stage, t: f64 },
    #[error("invalid step parameters: {0}")]
    InvalidParams(String),
    #[error("state lives on a different grid than the stepper")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    U,
    V,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::U => "u",
            Stage::V => "v",
        })
    }
}

/// One instant of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
    pub epsilon: f64,
}

impl SimState {
    pub fn initial(problem: &ProblemSpec) -> Self {
        SimState { u: problem.u0.clone(), v: problem.v0.clone(), t: 0.0, epsilon: problem.epsilon }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

pub const DEFAULT_SOLVER_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub dt: f64,
    pub solver_tol: f64,
    /// Defaults to ten times the cell count.
    pub max_iters: Option<usize>,
}

impl StepParams {
    pub fn new(dt: f64) -> Self {
        StepParams { dt, solver_tol: DEFAULT_SOLVER_TOL, max_iters: None }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.solver_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepError::InvalidParams(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-6) {
            return Err(StepError::InvalidParams(format!(
                "solver_tol must lie in (0, 1e-6] (got {})",
                self.solver_tol
            )));
        }
        if self.max_iters == Some(0) {
            return Err(StepError::InvalidParams("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step solver effort, for logging and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub u: SolveStats,
    pub v: SolveStats,
}

pub struct Stepper {
    grid: Grid,
    phi: MotilitySpec,
    params: StepParams,
    solver: Box<dyn LinearSolver>,
    last: StepStats,
    // scratch
    diag: Vec<f64>,
    alpha: Vec<f64>,
    x: Vec<f64>,
    lap: Vec<f64>,
}

impl Stepper {
    pub fn new(
        grid: &Grid,
        phi: MotilitySpec,
        params: StepParams,
        solver: Box<dyn LinearSolver>,
    ) -> Result<Self, StepError> {
        params.validate()?;
        let n = grid.len();
        Ok(Stepper {
            grid: grid.clone(),
            phi,
            params,
            solver,
            last: StepStats::default(),
            diag: vec![0.0; n],
            alpha: vec![0.0; n],
            x: vec![0.0; n],
            lap: vec![0.0; n],
        })
    }

    pub fn params(&self) -> &StepParams {
        &self.params
    }

    pub fn solver_name(&self) -> &str {
        self.solver.name()
    }

    pub fn last_stats(&self) -> StepStats {
        self.last
    }

    fn max_iters(&self) -> usize {
        self.params.max_iters.unwrap_or(10 * self.grid.len())
    }

    pub fn step(&mut self, state: &SimState) -> Result<SimState, StepError> {
        if state.u.grid() != &self.grid || state.v.grid() != &self.grid {
            return Err(StepError::GridMismatch);
        }
        let dt = self.params.dt;
        let tol = self.params.solver_tol;
        let max_iters = self.max_iters();
        let u = state.u.values();
        let v = state.v.values();
        let solve_err = |stage, source| StepError::Solve { stage, t: state.t, source };

        // u-stage: the unknown is the flux potential w = D u⁺
        for (d, &vi) in self.diag.iter_mut().zip(v) {
            *d = self.phi.eval(vi);
        }
        let u_stats = if self.solver.handles_nonsymmetric() {
            self.alpha.fill(1.0);
            self.x.copy_from_slice(u);
            let sys = ShiftedSystem { grid: &self.grid, dt, alpha: &self.alpha, beta: Some(&self.diag) };
            let stats = self.solver.solve(&sys, u, &mut self.x, tol, max_iters).map_err(|e| solve_err(Stage::U, e))?;
            for (x, &d) in self.x.iter_mut().zip(&self.diag) {
                *x *= d;
            }
            stats
        } else {
            // (D⁻¹ − dt L) w = uⁿ is symmetric positive definite
            for ((a, x), (&d, &ui)) in self.alpha.iter_mut().zip(self.x.iter_mut()).zip(self.diag.iter().zip(u)) {
                *a = 1.0 / d;
                *x = d * ui;
            }
            let sys = ShiftedSystem { grid: &self.grid, dt, alpha: &self.alpha, beta: None };
            self.solver.solve(&sys, u, &mut self.x, tol, max_iters).map_err(|e| solve_err(Stage::U, e))?
        };
        self.grid.laplacian_into(&self.x, &mut self.lap);
        let u_new: Vec<f64> = u.iter().zip(&self.lap).map(|(&ui, &l)| ui + dt * l).collect();
        if u_new.iter().any(|x| !x.is_finite()) {
            return Err(StepError::NonFinite { stage: Stage::U, t: state.t });
        }

        // v-stage with consumption frozen at u⁺
        for (a, &ui) in self.alpha.iter_mut().zip(&u_new) {
            *a = 1.0 + dt * consumption_coefficient(ui, state.epsilon);
        }
        let mut v_new = v.to_vec();
        let sys = ShiftedSystem { grid: &self.grid, dt, alpha: &self.alpha, beta: None };
        let v_stats = self.solver.solve(&sys, v, &mut v_new, tol, max_iters).map_err(|e| solve_err(Stage::V, e))?;
        if v_new.iter().any(|x| !x.is_finite()) {
            return Err(StepError::NonFinite { stage: Stage::V, t: state.t });
        }

        self.last = StepStats { u: u_stats, v: v_stats };
        Ok(SimState {
            u: Field::new(&self.grid, u_new).expect("length preserved"),
            v: Field::new(&self.grid, v_new).expect("length preserved"),
            t: state.t + dt,
            epsilon: state.epsilon,
        })
    }
}

/// Receives states during [`run`]. Must not rely on mutating them.
pub trait Observer {
    fn observe(&mut self, state: &SimState, step: usize);
}

impl<F: FnMut(&SimState, usize)> Observer for F {
    fn observe(&mut self, state: &SimState, step: usize) {
        self(state, step)
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn observe(&mut self, state: &SimState, step: usize) {
        self.0.observe(state, step);
        self.1.observe(state, step);
    }
}

/// Does nothing; for runs where only the final state matters.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &SimState, _: usize) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Observer cadence in steps (≥ 1). Step 0 is always observed.
    pub observe_every: usize,
    /// Keep a copy of every `k`-th state (including the initial one).
    pub store_every: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { observe_every: 1, store_every: None }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: SimState,
    pub steps: usize,
    pub dt: f64,
    pub observations: usize,
    pub stored: Vec<SimState>,
}

/// Number of steps needed to reach `t_end`, treating ratios within
/// round-off of an integer as exact.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    let ratio = t_end / dt;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { ratio.ceil() };
    (n as usize).max(1)
}

/// Advance from `t = 0` until `t ≥ t_end`.
pub fn run<O: Observer + ?Sized>(
    problem: &ProblemSpec,
    t_end: f64,
    stepper: &mut Stepper,
    options: &RunOptions,
    observer: &mut O,
) -> Result<Trajectory, StepError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(StepError::InvalidParams(format!("t_end must be positive (got {t_end})")));
    }
    if options.observe_every == 0 || options.store_every == Some(0) {
        return Err(StepError::InvalidParams("cadences must be at least 1".into()));
    }
    let dt = stepper.params().dt;
    let steps = step_count(t_end, dt);
    let mut state = SimState::initial(problem);
    let mut stored = Vec::new();
    let mut observations = 0;

    let mut visit = |state: &SimState, k: usize, stored: &mut Vec<SimState>, observations: &mut usize| {
        if k % options.observe_every == 0 {
            observer.observe(state, k);
            *observations += 1;
        }
        if let Some(every) = options.store_every {
            if k % every == 0 {
                stored.push(state.clone());
            }
        }
    };

    visit(&state, 0, &mut stored, &mut observations);
    for k in 1..=steps {
        let mut next = stepper.step(&state)?;
        next.t = k as f64 * dt;
        state = next;
        visit(&state, k, &mut stored, &mut observations);
    }
    Ok(Trajectory { final_state: state, steps, dt, observations, stored })
}

/// Accuracy heuristic for the (unconditionally stable) scheme:
/// `safety · min(h² / (2 d c2), 1 / (‖u0‖∞ ‖v0‖∞ + 1))`.
pub fn suggest_dt(problem: &ProblemSpec, bounds: &MotilityBounds, safety: f64) -> f64 {
    let h = problem.grid.min_spacing();
    let diffusive = h * h / (2.0 * problem.grid.dim() as f64 * bounds.c2);
    let reactive = 1.0 / (problem.u0.sup_norm() * problem.v0.sup_norm() + 1.0);
    safety * diffusive.min(reactive)
}

/// Tracks the structural invariants (mass, positivity, monotone `‖v‖∞`)
/// at every observed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMonitor {
    pub initial_mass: f64,
    pub initial_sup: f64,
    pub max_mass_drift: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub max_sup_v_increase: f64,
    last_sup_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const V_SUP_TOL: f64 = 1e-12;
pub const POSITIVITY_REL_TOL: f64 = 1e-13;

impl InvariantMonitor {
    pub fn new(problem: &ProblemSpec) -> Self {
        InvariantMonitor {
            initial_mass: problem.u0.integral(),
            initial_sup: problem.u0.max().max(problem.v0.max()),
            max_mass_drift: 0.0,
            min_u: f64::INFINITY,
            min_v: f64::INFINITY,
            max_sup_v_increase: f64::NEG_INFINITY,
            last_sup_v: None,
        }
    }

    /// Pass/fail per invariant; the mass tolerance is `10 · solver_tol`.
    pub fn checks(&self, solver_tol: f64) -> Vec<InvariantCheck> {
        let check = |name: &str, value: f64, tolerance: f64, passed: bool| InvariantCheck {
            name: name.to_string(),
            value,
            tolerance,
            passed,
        };
        let pos_tol = -POSITIVITY_REL_TOL * self.initial_sup;
        let min_both = self.min_u.min(self.min_v);
        let sup_inc = self.max_sup_v_increase.max(0.0);
        vec![
            check("mass", self.max_mass_drift, 10.0 * solver_tol, self.max_mass_drift <= 10.0 * solver_tol),
            check("positivity", min_both, pos_tol, min_both >= pos_tol),
            check("v_sup_monotone", sup_inc, V_SUP_TOL, sup_inc <= V_SUP_TOL),
        ]
    }
}

impl Observer for InvariantMonitor {
    fn observe(&mut self, state: &SimState, _step: usize) {
        let mass = state.u.integral();
        let drift = ((mass - self.initial_mass) / self.initial_mass).abs();
        // NaN must register as a failure
        self.max_mass_drift = if drift.is_nan() { f64::INFINITY } else { self.max_mass_drift.max(drift) };
        self.min_u = self.min_u.min(state.u.min());
        self.min_v = self.min_v.min(state.v.min());
        let sup = state.v.max();
        if let Some(prev) = self.last_sup_v {
            self.max_sup_v_increase = self.max_sup_v_increase.max(sup - prev);
        }
        self.last_sup_v = Some(sup);
    }
}

//! Closed-form bounds for damped first order differential inequalities and
//! a brute-force RK4 oracle that checks them against the equality dynamics
//! under randomized forcing.
//!
//! ```text
//! linear_damping:               y' + a y   ≤ h      with ∫_{(t-1)_+}^t h ≤ b
//! superlinear_absorption:       y' + a y^λ ≤ h y    with ∫_{(t-1)_+}^t h ≤ b
//! superlinear_constant_forcing: y' + a y^λ ≤ b
//! ```

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("lambda must exceed 1 (got {0})")]
    LambdaTooSmall(f64),
    #[error("initial value must be {requirement} (got {value})")]
    BadInitial { requirement: &'static str, value: f64 },
    #[error("horizon {horizon} must exceed t0 = {t0}")]
    BadHorizon { t0: f64, horizon: f64 },
    #[error("t0 must be nonnegative for windowed forcing (got {0})")]
    NegativeStart(f64),
    #[error("at least 1000 steps are required (got {0})")]
    TooFewSteps(usize),
    #[error("elapsed time must be positive (got {0})")]
    ElapsedNonPositive(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    LinearDamping,
    SuperlinearAbsorption,
    SuperlinearConstantForcing,
}

impl BoundKind {
    pub const ALL: [BoundKind; 3] =
        [BoundKind::LinearDamping, BoundKind::SuperlinearAbsorption, BoundKind::SuperlinearConstantForcing];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::LinearDamping => "linear_damping",
            BoundKind::SuperlinearAbsorption => "superlinear_absorption",
            BoundKind::SuperlinearConstantForcing => "superlinear_constant_forcing",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), OdeError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(OdeError::NonPositive { name, value })
    }
}

fn check_lambda(lambda: f64) -> Result<(), OdeError> {
    if lambda > 1.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(OdeError::LambdaTooSmall(lambda))
    }
}

/// `y0 + b / (1 − e^{−a})`
pub fn bound_linear_damping(y0: f64, a: f64, b: f64) -> Result<f64, OdeError> {
    positive("a", a)?;
    positive("b", b)?;
    if !(y0 >= 0.0) {
        return Err(OdeError::BadInitial { requirement: "nonnegative", value: y0 });
    }
    Ok(y0 + b / -(-a).exp_m1())
}

/// `max(y0 e^b, (a(λ−1))^{−1/(λ−1)} e^b)`
pub fn bound_superlinear(y0: f64, a: f64, b: f64, lambda: f64) -> Result<f64, OdeError> {
    check_lambda(lambda)?;
    positive("a", a)?;
    positive("b", b)?;
    if !(y0 > 0.0) {
        return Err(OdeError::BadInitial { requirement: "positive", value: y0 });
    }
    let floor = (a * (lambda - 1.0)).powf(-1.0 / (lambda - 1.0));
    Ok(y0.max(floor) * b.exp())
}

/// `(b/a)^{1/λ} + (a(λ−1))^{−1/(λ−1)} · elapsed^{−1/(λ−1)}`; this is also the
/// comparison function `ȳ(t0 + elapsed)`.
pub fn bound_superlinear_decay(a: f64, b: f64, lambda: f64, elapsed: f64) -> Result<f64, OdeError> {
    check_lambda(lambda)?;
    positive("a", a)?;
    positive("b", b)?;
    if !(elapsed > 0.0) {
        return Err(OdeError::ElapsedNonPositive(elapsed));
    }
    let e = -1.0 / (lambda - 1.0);
    Ok((b / a).powf(1.0 / lambda) + (a * (lambda - 1.0)).powf(e) * elapsed.powf(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeBoundProblem {
    pub kind: BoundKind,
    pub a: f64,
    pub b: f64,
    /// Ignored for `LinearDamping`.
    pub lambda: f64,
    pub y0: f64,
    pub t0: f64,
    pub horizon: f64,
}

impl OdeBoundProblem {
    pub fn validate(&self) -> Result<(), OdeError> {
        positive("a", self.a)?;
        positive("b", self.b)?;
        if self.kind != BoundKind::LinearDamping {
            check_lambda(self.lambda)?;
        }
        let initial_ok = match self.kind {
            BoundKind::SuperlinearAbsorption => self.y0 > 0.0,
            _ => self.y0 >= 0.0,
        };
        if !(initial_ok && self.y0.is_finite()) {
            let requirement = if self.kind == BoundKind::SuperlinearAbsorption { "positive" } else { "nonnegative" };
            return Err(OdeError::BadInitial { requirement, value: self.y0 });
        }
        if !(self.horizon > self.t0) || !self.horizon.is_finite() {
            return Err(OdeError::BadHorizon { t0: self.t0, horizon: self.horizon });
        }
        if !(self.t0 >= 0.0) {
            return Err(OdeError::NegativeStart(self.t0));
        }
        Ok(())
    }

    /// The claimed bound at time `t`; `None` where it is infinite (at `t0`
    /// for the constant-forcing kind).
    pub fn bound_at(&self, t: f64) -> Option<f64> {
        match self.kind {
            BoundKind::LinearDamping => bound_linear_damping(self.y0, self.a, self.b).ok(),
            BoundKind::SuperlinearAbsorption => bound_superlinear(self.y0, self.a, self.b, self.lambda).ok(),
            BoundKind::SuperlinearConstantForcing => {
                bound_superlinear_decay(self.a, self.b, self.lambda, t - self.t0).ok()
            }
        }
    }

    /// Parameters drawn for the randomized suite: `a, b` log-uniform on
    /// `[0.1, 10]`, `λ ∈ (1, 4]`, `y0 ∈ [0, 100]` (`(0, 100]` where positivity
    /// is required), `t0 = 0`, horizon 5.
    pub fn random(kind: BoundKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3).wrapping_add(kind.index()));
        let log_uniform = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-1.0..=1.0));
        let a = log_uniform(&mut rng);
        let b = log_uniform(&mut rng);
        let lambda = 1.0 + 3.0 * (1.0 - rng.gen::<f64>());
        let y0 = match kind {
            BoundKind::SuperlinearAbsorption => 100.0 * (1.0 - rng.gen::<f64>()),
            _ => 100.0 * rng.gen::<f64>(),
        };
        OdeBoundProblem { kind, a, b, lambda, y0, t0: 0.0, horizon: 5.0 }
    }
}

/// Length of the constant pieces of random forcing.
pub const FORCING_CELL: f64 = 0.1;

/// Nonnegative forcing `h`, zero before `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Forcing {
    Constant(f64),
    /// Value `values[k]` on `[k·cell, (k+1)·cell)`, zero past the last cell.
    Piecewise { cell: f64, values: Vec<f64> },
}

impl Forcing {
    pub fn zero() -> Self {
        Forcing::Constant(0.0)
    }

    /// Independent draws `U(0,1)^2` on cells of length [`FORCING_CELL`]
    /// covering `[0, horizon]`, scaled in one factor so that the largest
    /// window integral `∫_{(t-1)_+}^t h` equals `b` exactly.
    pub fn random(seed: u64, horizon: f64, b: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let count = (horizon / FORCING_CELL).ceil().max(1.0) as usize;
        let mut values: Vec<f64> = (0..count).map(|_| rng.gen::<f64>().powi(2)).collect();
        let forcing = Forcing::Piecewise { cell: FORCING_CELL, values: values.clone() };
        let peak = forcing.max_window_integral();
        if peak > 0.0 {
            values.iter_mut().for_each(|v| *v *= b / peak);
        }
        Forcing::Piecewise { cell: FORCING_CELL, values }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Forcing::Constant(c) => {
                if t >= 0.0 {
                    *c
                } else {
                    0.0
                }
            }
            Forcing::Piecewise { cell, values } => {
                if t < 0.0 {
                    return 0.0;
                }
                values.get((t / cell).floor() as usize).copied().unwrap_or(0.0)
            }
        }
    }

    fn antiderivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Forcing::Constant(c) => c * t,
            Forcing::Piecewise { cell, values } => {
                let k = ((t / cell).floor() as usize).min(values.len());
                let full: f64 = values[..k].iter().sum::<f64>() * cell;
                full + values.get(k).map_or(0.0, |v| v * (t - k as f64 * cell))
            }
        }
    }

    /// `∫_{(t-1)_+}^t h`
    pub fn window_integral(&self, t: f64) -> f64 {
        self.antiderivative(t) - self.antiderivative((t - 1.0).max(0.0))
    }

    /// Supremum over `t ≥ 0` of the window integral. For piecewise forcing
    /// whose cell divides 1 the window integral is piecewise linear with
    /// kinks on the cell lattice, so the lattice maximum is exact.
    pub fn max_window_integral(&self) -> f64 {
        match self {
            Forcing::Constant(c) => c.max(0.0),
            Forcing::Piecewise { cell, values } => {
                let per_window = (1.0 / cell).round() as usize;
                (0..=values.len() + per_window)
                    .map(|k| self.window_integral(k as f64 * cell))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Discontinuities strictly inside `(start, end)`.
    fn breakpoints(&self, start: f64, end: f64) -> Vec<f64> {
        match self {
            Forcing::Constant(_) => Vec::new(),
            Forcing::Piecewise { cell, values } => {
                let first = (start / cell).floor() as i64 + 1;
                (first.max(0)..=values.len() as i64)
                    .map(|k| k as f64 * cell)
                    .take_while(|&t| t < end)
                    .filter(|&t| t > start && (t - start) > 1e-12 * cell && (end - t) > 1e-12 * cell)
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub problem: OdeBoundProblem,
    pub n_steps: usize,
    /// `max (y − bound)` over grid times where the bound is finite.
    pub max_excess: f64,
    /// `max (y − bound) / (1 + bound)`; passing requires ≤ [`PASS_MARGIN`].
    pub max_relative_excess: f64,
    pub worst_time: f64,
    pub final_value: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

pub const PASS_MARGIN: f64 = 1e-6;

/// Largest `dt · |∂f/∂y|` allowed in one RK4 substep.
const STIFFNESS_LIMIT: f64 = 0.1;
const MAX_SUBSTEPS: f64 = 1e8;

/// Check the bound against the equality dynamics driven by the random
/// forcing of `forcing_seed`.
pub fn verify_bound(problem: &OdeBoundProblem, forcing_seed: u64, n_steps: usize) -> Result<VerificationReport, OdeError> {
    problem.validate()?;
    let forcing = Forcing::random(forcing_seed, problem.horizon, problem.b);
    verify_with(problem, &forcing, n_steps)
}

/// Same as [`verify_bound`] with explicit forcing; the caller is responsible
/// for the window constraint. The constant-forcing kind ignores `forcing`.
pub fn verify_with(problem: &OdeBoundProblem, forcing: &Forcing, n_steps: usize) -> Result<VerificationReport, OdeError> {
    problem.validate()?;
    if n_steps < 1000 {
        return Err(OdeError::TooFewSteps(n_steps));
    }
    let dt = (problem.horizon - problem.t0) / n_steps as f64;
    let mut report = VerificationReport {
        problem: *problem,
        n_steps,
        max_excess: f64::NEG_INFINITY,
        max_relative_excess: f64::NEG_INFINITY,
        worst_time: problem.t0,
        final_value: problem.y0,
        passed: false,
        failure: None,
    };
    let mut y = problem.y0;
    let observe = |t: f64, y: f64, report: &mut VerificationReport| {
        if let Some(bound) = problem.bound_at(t) {
            let excess = y - bound;
            let rel = excess / (1.0 + bound);
            if rel > report.max_relative_excess {
                report.max_relative_excess = rel;
                report.worst_time = t;
            }
            report.max_excess = report.max_excess.max(excess);
        }
    };
    observe(problem.t0, y, &mut report);
    for k in 0..n_steps {
        let ta = problem.t0 + k as f64 * dt;
        let tb = problem.t0 + (k + 1) as f64 * dt;
        match advance(problem, forcing, y, ta, tb) {
            Ok(next) => y = next,
            Err(msg) => {
                report.failure = Some(msg);
                report.final_value = y;
                return Ok(report);
            }
        }
        observe(tb, y, &mut report);
    }
    report.final_value = y;
    report.passed = report.max_relative_excess <= PASS_MARGIN;
    if !report.passed {
        report.failure = Some(format!(
            "bound exceeded by {:.3e} (relative {:.3e}) at t = {}",
            report.max_excess, report.max_relative_excess, report.worst_time
        ));
    }
    Ok(report)
}

fn rhs(problem: &OdeBoundProblem, h: f64, y: f64) -> f64 {
    let a = problem.a;
    // odd extension keeps y^λ defined under round-off below zero
    let power = |y: f64| y.abs().powf(problem.lambda - 1.0) * y;
    match problem.kind {
        BoundKind::LinearDamping => -a * y + h,
        BoundKind::SuperlinearAbsorption => -a * power(y) + h * y,
        BoundKind::SuperlinearConstantForcing => -a * power(y) + problem.b,
    }
}

fn stiffness(problem: &OdeBoundProblem, h: f64, y: f64) -> f64 {
    let a = problem.a;
    match problem.kind {
        BoundKind::LinearDamping => a,
        _ => a * problem.lambda * y.abs().powf(problem.lambda - 1.0) + h,
    }
}

/// Integrate from `ta` to `tb`, splitting at forcing discontinuities and
/// subdividing each piece until every substep is well inside the RK4
/// stability region.
fn advance(problem: &OdeBoundProblem, forcing: &Forcing, mut y: f64, ta: f64, tb: f64) -> Result<f64, String> {
    let mut edges = vec![ta];
    if problem.kind != BoundKind::SuperlinearConstantForcing {
        edges.extend(forcing.breakpoints(ta, tb));
    }
    edges.push(tb);
    for piece in edges.windows(2) {
        let (s0, s1) = (piece[0], piece[1]);
        let h = forcing.value(0.5 * (s0 + s1));
        let len = s1 - s0;
        let m = (len * stiffness(problem, h, y) / STIFFNESS_LIMIT).ceil().max(1.0);
        if m > MAX_SUBSTEPS {
            return Err(format!("stiffness requires {m:e} substeps at t = {s0}"));
        }
        let sub = len / m;
        for _ in 0..m as usize {
            let k1 = rhs(problem, h, y);
            let k2 = rhs(problem, h, y + 0.5 * sub * k1);
            let k3 = rhs(problem, h, y + 0.5 * sub * k2);
            let k4 = rhs(problem, h, y + sub * k3);
            y += sub / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !y.is_finite() {
            return Err(format!("overflow at t = {s1}"));
        }
    }
    Ok(y)
}

/// One row of the randomized suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub kind: BoundKind,
    pub seed: u64,
    pub report: VerificationReport,
    /// `|y_n(T) − y_{2n}(T)|` for the step-halving cross-check, run on
    /// every tenth seed.
    pub richardson_diff: Option<f64>,
    pub passed: bool,
}

/// Tolerance on the step-halving difference, relative to `1 + |y(T)|`.
pub const RICHARDSON_TOL: f64 = 1e-8;

pub fn verify_seed(kind: BoundKind, seed: u64, n_steps: usize) -> Result<SuiteRow, OdeError> {
    let problem = OdeBoundProblem::random(kind, seed);
    let forcing = Forcing::random(seed, problem.horizon, problem.b);
    let report = verify_with(&problem, &forcing, n_steps)?;
    let richardson_diff = if seed % 10 == 0 && report.failure.is_none() {
        let fine = verify_with(&problem, &forcing, 2 * n_steps)?;
        Some((fine.final_value - report.final_value).abs())
    } else {
        None
    };
    let richardson_ok = richardson_diff.map_or(true, |d| d <= RICHARDSON_TOL * (1.0 + report.final_value.abs()));
    let passed = report.passed && richardson_ok;
    Ok(SuiteRow { kind, seed, report, richardson_diff, passed })
}

/// Every kind for every seed in `seeds`, spread over `workers` threads.
/// Rows are ordered by kind, then seed.
pub fn run_suite(seeds: Range<u64>, n_steps: usize, workers: usize) -> Result<Vec<SuiteRow>, OdeError> {
    let jobs: Vec<(BoundKind, u64)> =
        BoundKind::ALL.iter().flat_map(|&k| seeds.clone().map(move |s| (k, s))).collect();
    let workers = workers.max(1).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<SuiteRow>, OdeError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&(k, s)| verify_seed(k, s, n_steps)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("suite worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

//! Matrix-free Krylov solvers for the shifted Laplacian systems that the
//! stepper produces, behind one [`LinearSolver`] trait and selected by name
//! through a [`SolverRegistry`].

mod bicgstab;
mod cg;

pub use bicgstab::BiCgStab;
pub use cg::{ConjugateGradient, CosinePreconditioned};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("linear solver `{solver}` did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { solver: String, iterations: usize, residual: f64 },
    #[error("linear solver `{solver}` broke down: {reason}")]
    Breakdown { solver: String, reason: String },
    #[error("solver `{0}` requires a symmetric system")]
    NeedsSymmetric(String),
    #[error("unknown linear solver `{name}` (available: {available})")]
    UnknownSolver { name: String, available: String },
}

/// `M x = α ∘ x − dt · L(β ∘ x)` with diagonal `α > 0`, `β > 0` and `L` the
/// Neumann Laplacian. Symmetric positive definite when `β` is absent.
pub struct ShiftedSystem<'a> {
    pub grid: &'a Grid,
    pub dt: f64,
    pub alpha: &'a [f64],
    pub beta: Option<&'a [f64]>,
}

impl ShiftedSystem<'_> {
    pub fn is_symmetric(&self) -> bool {
        self.beta.is_none()
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `y = M x`; `work` is scratch of the same length.
    pub fn apply(&self, x: &[f64], y: &mut [f64], work: &mut [f64]) {
        match self.beta {
            None => self.grid.laplacian_into(x, y),
            Some(beta) => {
                for ((w, &xi), &b) in work.iter_mut().zip(x).zip(beta) {
                    *w = b * xi;
                }
                self.grid.laplacian_into(work, y);
            }
        }
        for ((yi, &xi), &a) in y.iter_mut().zip(x).zip(self.alpha) {
            *yi = a * xi - self.dt * *yi;
        }
    }

    /// `r = b − M x`, returns `‖r‖∞`.
    pub fn residual(&self, x: &[f64], b: &[f64], r: &mut [f64], work: &mut [f64]) -> f64 {
        let mut mx = vec![0.0; x.len()];
        self.apply(x, &mut mx, work);
        let mut m = 0.0_f64;
        for ((ri, &bi), &mi) in r.iter_mut().zip(b).zip(&mx) {
            *ri = bi - mi;
            m = m.max(ri.abs());
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖b − M x‖∞ / ‖b‖∞`.
    pub relative_residual: f64,
}

/// A Krylov strategy. Convergence means `‖b − M x‖∞ ≤ tol · ‖b‖∞`, checked
/// on the true residual.
pub trait LinearSolver: Send {
    fn name(&self) -> &str;

    /// Whether systems with `β` present may be passed to [`solve`](Self::solve).
    fn handles_nonsymmetric(&self) -> bool;

    /// Solve in place; `x` holds the initial guess on entry.
    fn solve(
        &mut self,
        system: &ShiftedSystem<'_>,
        rhs: &[f64],
        x: &mut [f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<SolveStats, SolveError>;
}

impl fmt::Debug for dyn LinearSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinearSolver({})", self.name())
    }
}

pub type SolverFactory = Box<dyn Fn(&Grid) -> Box<dyn LinearSolver> + Send + Sync>;

pub const DEFAULT_SOLVER: &str = "pcg-cosine";

/// Name → constructor table for linear solvers.
pub struct SolverRegistry {
    factories: BTreeMap<String, SolverFactory>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = SolverRegistry::empty();
        r.register("cg", |_| Box::new(ConjugateGradient::default()));
        r.register("pcg-cosine", |g| Box::new(CosinePreconditioned::new(g)));
        r.register("bicgstab", |_| Box::new(BiCgStab::default()));
        r
    }
}

impl SolverRegistry {
    pub fn empty() -> Self {
        SolverRegistry { factories: BTreeMap::new() }
    }

    /// Add or replace a strategy.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&Grid) -> Box<dyn LinearSolver> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn create(&self, name: &str, grid: &Grid) -> Result<Box<dyn LinearSolver>, SolveError> {
        self.factories.get(name).map(|f| f(grid)).ok_or_else(|| SolveError::UnknownSolver {
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }
}

pub(crate) fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

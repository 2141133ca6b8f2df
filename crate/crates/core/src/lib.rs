//! Simulation and verification toolkit for the consumption chemotaxis
//! system with signal-dependent motility,
//!
//! ```text
//! u_t = Δ(u φ(v)),   v_t = Δv − u v / (1 + ε u),   ∂_ν u = ∂_ν v = 0,
//! ```
//!
//! on boxes in one to three dimensions.

pub mod diagnostics;
pub mod grid;
pub mod harness;
pub mod model;
pub mod odebounds;
pub mod solver;
pub mod stepper;

pub use grid::{build_grid, CosineBasis, Field, Grid, GridError};
pub use model::{
    certify_bounds, make_initial_data, make_motility, regularized_consumption, InitialData,
    ModelError, MotilityBounds, MotilitySpec, ProblemSpec,
};
pub use solver::{LinearSolver, SolverRegistry};
pub use stepper::{run, suggest_dt, RunOptions, SimState, StepParams, Stepper, Trajectory};

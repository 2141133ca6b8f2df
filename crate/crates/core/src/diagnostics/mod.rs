//! Functionals tracked along trajectories: the quantities entering the
//! a priori estimates, sliding time-window integrals, the weighted
//! functional, stabilization metrics and weak-formulation residuals.

mod stabilization;
mod weak;
mod weighted;
mod window;

pub use stabilization::{first_time_below, stabilization_metrics, StabilizationReport, ThresholdCrossing};
pub use weak::{weak_residual, TemporalBump, TestFunction};
pub use weighted::{choose_weighted_params, weighted_functional, WeightedParams};
pub use window::{sliding_window_series, sliding_window_sup, WindowSeries, DEFAULT_WINDOW};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CosineBasis, Field, Grid, GridError};
use crate::stepper::{Observer, SimState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("sliding window needs at least 2 samples (got {0})")]
    TooFewSamples(usize),
    #[error("sample times must be strictly increasing (at index {0})")]
    NonIncreasingTimes(usize),
    #[error("window length must be positive (got {0})")]
    BadWindow(f64),
    #[error("weighted functional exponent p must exceed 1 (got {0})")]
    BadExponent(f64),
    #[error("invalid motility bounds: {0}")]
    BadBounds(String),
    #[error("weighted functional needs max v < delta ({max_v} ≥ {delta})")]
    SignalTooLarge { max_v: f64, delta: f64 },
    #[error("test function support ends at {support} beyond the trajectory horizon {horizon}")]
    SupportBeyondHorizon { support: f64, horizon: f64 },
    #[error("trajectory must hold at least two states at a uniform cadence: {0}")]
    BadTrajectory(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Every tracked functional for one state. Optional entries are absent
/// when undefined (no previous state, weighted functional out of range).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub sup_v: f64,
    pub dual_norm_sq: f64,
    pub l2_u_sq: f64,
    pub grad_v_sq: f64,
    pub lap_v_sq: f64,
    pub grad_v_4: f64,
    pub v_t_sq: Option<f64>,
    pub lp_u: Vec<f64>,
    pub entropy_u: f64,
    pub fisher_u: f64,
    pub grad_u_43: f64,
    pub weighted: Option<f64>,
    /// Set when the weighted functional was requested but `max v ≥ δ`.
    pub weighted_out_of_range: bool,
    pub stab_u: f64,
    pub stab_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordConfig {
    /// Exponents `p` for `∫u^p`.
    pub p_list: Vec<f64>,
    pub weighted: Option<WeightedParams>,
    /// `ū0 = ∫u0 / |Ω|`, the stabilization target for `u`.
    pub mean_u0: f64,
}

/// Cells with `u` below this fraction of the mean are left out of the
/// Fisher information sum.
pub const FISHER_FLOOR: f64 = 1e-12;

/// Compute a [`DiagnosticsRecord`]. `previous` is the state one time step
/// earlier, used for the backward difference behind `v_t_sq`.
pub fn record(
    state: &SimState,
    previous: Option<&SimState>,
    config: &RecordConfig,
    basis: &CosineBasis,
) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let grid = state.grid();
    grid.check(&state.v)?;
    if basis.grid() != grid {
        return Err(GridError::GridMismatch.into());
    }
    let u = state.u.values();
    let v = state.v.values();
    let n = grid.len();
    let w = grid.cell_volume();
    let integrate = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() * w;

    let mass_u = grid.integrate_slice(u);
    let sup_v = state.v.max();

    let mut a_half = u.to_vec();
    basis.apply_symbol(&mut a_half, |lambda| 1.0 / (1.0 + lambda).sqrt());
    let dual_norm_sq = integrate(&|i| a_half[i] * a_half[i]);

    let mut gv = vec![0.0; n];
    grid.gradient_sq_into(v, &mut gv);
    let mut lv = vec![0.0; n];
    grid.laplacian_into(v, &mut lv);
    let mut gu = vec![0.0; n];
    grid.gradient_sq_into(u, &mut gu);

    let v_t_sq = match previous {
        Some(prev) => {
            grid.check(&prev.v)?;
            let dt = state.t - prev.t;
            let pv = prev.v.values();
            Some(integrate(&|i| ((v[i] - pv[i]) / dt).powi(2)))
        }
        None => None,
    };

    let floor = FISHER_FLOOR * mass_u / grid.volume();
    let fisher_u = integrate(&|i| if u[i] >= floor && u[i] > 0.0 { gu[i] / u[i] } else { 0.0 });

    let (weighted, weighted_out_of_range) = match &config.weighted {
        Some(wp) if sup_v < wp.delta => (Some(weighted_sum(grid, u, v, wp)), false),
        Some(_) => (None, true),
        None => (None, false),
    };

    Ok(DiagnosticsRecord {
        t: state.t,
        mass_u,
        sup_v,
        dual_norm_sq,
        l2_u_sq: integrate(&|i| u[i] * u[i]),
        grad_v_sq: integrate(&|i| gv[i]),
        lap_v_sq: integrate(&|i| lv[i] * lv[i]),
        grad_v_4: integrate(&|i| gv[i] * gv[i]),
        v_t_sq,
        lp_u: config.p_list.iter().map(|&p| integrate(&|i| u[i].powf(p))).collect(),
        entropy_u: integrate(&|i| xlogx(u[i])),
        fisher_u,
        grad_u_43: integrate(&|i| gu[i].powf(2.0 / 3.0)),
        weighted,
        weighted_out_of_range,
        stab_u: u.iter().fold(0.0_f64, |m, &x| m.max((x - config.mean_u0).abs())),
        stab_v: sup_v,
    })
}

/// `ξ ln ξ` with `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

pub(crate) fn weighted_sum(grid: &Grid, u: &[f64], v: &[f64], wp: &WeightedParams) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&ui, &vi)| ui.powf(wp.p) * (wp.delta - vi).powf(-wp.kappa))
        .sum::<f64>()
        * grid.cell_volume()
}

/// Observer producing a record every `cadence` steps. It sees every step so
/// that `v_t_sq` can use the immediately preceding state.
pub struct Recorder {
    config: RecordConfig,
    cadence: usize,
    basis: CosineBasis,
    previous: Option<SimState>,
    records: Vec<DiagnosticsRecord>,
    error: Option<DiagnosticsError>,
}

impl Recorder {
    pub fn new(grid: &Grid, config: RecordConfig, cadence: usize) -> Self {
        Recorder {
            config,
            cadence: cadence.max(1),
            basis: CosineBasis::new(grid),
            previous: None,
            records: Vec::new(),
            error: None,
        }
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn into_records(self) -> Result<Vec<DiagnosticsRecord>, DiagnosticsError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.records),
        }
    }

    pub fn error(&self) -> Option<&DiagnosticsError> {
        self.error.as_ref()
    }
}

impl Observer for Recorder {
    fn observe(&mut self, state: &SimState, step: usize) {
        if step % self.cadence == 0 && self.error.is_none() {
            match record(state, self.previous.as_ref(), &self.config, &self.basis) {
                Ok(r) => self.records.push(r),
                Err(e) => self.error = Some(e),
            }
        }
        // only v and t of the previous step are read
        match &mut self.previous {
            Some(prev) => {
                prev.v.values_mut().copy_from_slice(state.v.values());
                prev.t = state.t;
            }
            None => {
                self.previous = Some(SimState {
                    u: Field::zeros(state.grid()),
                    v: state.v.clone(),
                    t: state.t,
                    epsilon: state.epsilon,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_state(u: f64, v: f64) -> SimState {
        let g = Grid::unit_1d(16).unwrap();
        SimState { u: Field::constant(&g, u), v: Field::constant(&g, v), t: 0.0, epsilon: 0.0 }
    }

    fn cfg(mean: f64) -> RecordConfig {
        RecordConfig { p_list: vec![2.0, 3.0], weighted: None, mean_u0: mean }
    }

    #[test]
    fn uniform_unit_density() {
        let s = unit_state(1.0, 0.0);
        let r = record(&s, None, &cfg(1.0), &CosineBasis::new(s.grid())).unwrap();
        assert!((r.mass_u - 1.0).abs() < 1e-14);
        assert_eq!(r.sup_v, 0.0);
        assert_eq!(r.entropy_u, 0.0);
        assert!((r.l2_u_sq - 1.0).abs() < 1e-14);
        assert!((r.dual_norm_sq - 1.0).abs() < 1e-12);
        assert_eq!(r.stab_u, 0.0);
        assert_eq!(r.v_t_sq, None);
        assert_eq!(r.fisher_u, 0.0);
        assert!((r.lp_u[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn entropy_of_constant_two() {
        let s = unit_state(2.0, 0.0);
        let r = record(&s, None, &cfg(2.0), &CosineBasis::new(s.grid())).unwrap();
        assert!((r.entropy_u - 2.0 * 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn weighted_presence_flag() {
        let s = unit_state(1.0, 0.3);
        let mut c = cfg(1.0);
        c.weighted = Some(WeightedParams { p: 2.0, kappa: 1.0, delta: 0.3 });
        let r = record(&s, None, &c, &CosineBasis::new(s.grid())).unwrap();
        assert_eq!(r.weighted, None);
        assert!(r.weighted_out_of_range);
        c.weighted = Some(WeightedParams { p: 2.0, kappa: 1.0, delta: 0.5 });
        let r = record(&s, None, &c, &CosineBasis::new(s.grid())).unwrap();
        assert!((r.weighted.unwrap() - 5.0).abs() < 1e-12);
        assert!(!r.weighted_out_of_range);
    }

    #[test]
    fn backward_difference_for_v_t() {
        let prev = unit_state(1.0, 1.0);
        let mut next = unit_state(1.0, 0.9);
        next.t = 0.1;
        let r = record(&next, Some(&prev), &cfg(1.0), &CosineBasis::new(next.grid())).unwrap();
        assert!((r.v_t_sq.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xlogx_convention() {
        assert_eq!(xlogx(0.0), 0.0);
        assert_eq!(xlogx(1.0), 0.0);
        assert!((xlogx((-1f64).exp()) + (-1f64).exp()).abs() < 1e-16);
    }
}

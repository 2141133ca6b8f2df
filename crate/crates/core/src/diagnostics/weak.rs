use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::grid::Grid;
use crate::model::{consumption_coefficient, MotilitySpec};
use crate::stepper::SimState;

/// Smooth cutoff `χ(t) = exp(1 − 1/(1 − (t/T)^2))` on `[0, T)`, zero after;
/// `χ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalBump {
    pub support: f64,
}

impl TemporalBump {
    pub fn value(&self, t: f64) -> f64 {
        let s = t / self.support;
        if !(0.0..1.0).contains(&s) {
            return 0.0;
        }
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = t / self.support;
        if !(0.0..1.0).contains(&s) {
            return 0.0;
        }
        let q = 1.0 - s * s;
        self.value(t) * (-2.0 * s / (q * q)) / self.support
    }
}

/// `ψ(x, t) = (offset + ∑ c_m ∏_i cos(k_{m,i} π x_i / L_i)) · χ(t)`.
/// Wavenumbers need not be integers; the test function is not required to
/// satisfy any boundary condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub offset: f64,
    pub modes: Vec<(Vec<f64>, f64)>,
    pub temporal: TemporalBump,
}

impl TestFunction {
    pub fn zero(support: f64) -> Self {
        TestFunction { offset: 0.0, modes: Vec::new(), temporal: TemporalBump { support } }
    }

    /// Spatially constant `ψ = χ(t)`.
    pub fn temporal_only(support: f64) -> Self {
        TestFunction { offset: 1.0, modes: Vec::new(), temporal: TemporalBump { support } }
    }

    pub fn spatial(&self, grid: &Grid, x: &[f64]) -> f64 {
        let mut s = self.offset;
        for (k, c) in &self.modes {
            let term: f64 = (0..grid.dim())
                .map(|a| {
                    let ka = k.get(a).copied().unwrap_or(0.0);
                    (ka * std::f64::consts::PI * x[a] / grid.extents()[a]).cos()
                })
                .product();
            s += c * term;
        }
        s
    }
}

/// Residuals `(R_u, R_v)` of the two weak identities along a stored
/// trajectory, with trapezoidal quadrature in time, midpoint quadrature in
/// space and face differences for gradients:
///
/// ```text
/// R_u = | −∫∫ u ψ_t − ∫ u0 ψ(0) + ∫∫ ∇(u φ(v))·∇ψ |
/// R_v = |  ∫∫ v ψ_t + ∫ v0 ψ(0) − ∫∫ ∇v·∇ψ − ∫∫ c(u) v ψ |
/// ```
///
/// with `c(u) = u / (1 + ε u)` taken at the trajectory's ε (plain `u` at
/// `ε = 0`). The initial datum for `v` is the stored state at `t = 0`.
pub fn weak_residual(
    states: &[SimState],
    phi: &MotilitySpec,
    test: &TestFunction,
) -> Result<(f64, f64), DiagnosticsError> {
    if states.len() < 2 {
        return Err(DiagnosticsError::BadTrajectory(format!("{} states", states.len())));
    }
    let dt = states[1].t - states[0].t;
    if !(dt > 0.0) {
        return Err(DiagnosticsError::BadTrajectory("non-increasing times".into()));
    }
    for (k, w) in states.windows(2).enumerate() {
        if ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt {
            return Err(DiagnosticsError::BadTrajectory(format!("irregular spacing at state {}", k + 1)));
        }
    }
    let horizon = states.last().unwrap().t;
    if test.temporal.support > horizon + 1e-12 * horizon.max(1.0) {
        return Err(DiagnosticsError::SupportBeyondHorizon { support: test.temporal.support, horizon });
    }
    let grid = states[0].grid();
    let s: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.cell_center(i);
            test.spatial(grid, &x[..grid.dim()])
        })
        .collect();
    let pair = |a: &[f64], b: &[f64]| grid.integrate_slice(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());

    let (mut lhs_u, mut rhs_u, mut lhs_v, mut rhs_v) = (0.0, 0.0, 0.0, 0.0);
    let last = states.len() - 1;
    let mut flux = vec![0.0; grid.len()];
    let mut reaction = vec![0.0; grid.len()];
    for (k, st) in states.iter().enumerate() {
        grid.check(&st.u)?;
        grid.check(&st.v)?;
        let weight = if k == 0 || k == last { 0.5 * dt } else { dt };
        let chi = test.temporal.value(st.t - states[0].t);
        let dchi = test.temporal.derivative(st.t - states[0].t);
        if chi == 0.0 && dchi == 0.0 {
            continue;
        }
        let u = st.u.values();
        let v = st.v.values();
        for i in 0..grid.len() {
            flux[i] = u[i] * phi.eval(v[i]);
            reaction[i] = consumption_coefficient(u[i], st.epsilon) * v[i];
        }
        lhs_u -= weight * dchi * pair(u, &s);
        rhs_u -= weight * chi * grid.dirichlet_form(&flux, &s);
        lhs_v += weight * dchi * pair(v, &s);
        rhs_v += weight * chi * (grid.dirichlet_form(v, &s) + pair(&reaction, &s));
    }
    let chi0 = test.temporal.value(0.0);
    lhs_u -= chi0 * pair(states[0].u.values(), &s);
    lhs_v += chi0 * pair(states[0].v.values(), &s);
    Ok(((lhs_u - rhs_u).abs(), (lhs_v - rhs_v).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;

    fn stationary(c: f64, dt: f64, n: usize) -> Vec<SimState> {
        let g = Grid::unit_1d(8).unwrap();
        (0..=n)
            .map(|k| SimState { u: Field::constant(&g, c), v: Field::zeros(&g), t: k as f64 * dt, epsilon: 0.0 })
            .collect()
    }

    #[test]
    fn bump_shape() {
        let b = TemporalBump { support: 2.0 };
        assert_eq!(b.value(0.0), 1.0);
        assert_eq!(b.value(2.0), 0.0);
        assert_eq!(b.value(3.0), 0.0);
        let h = 1e-6;
        for t in [0.3, 1.0, 1.7] {
            let fd = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
            assert!((fd - b.derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_test_function_has_zero_residual() {
        let states = stationary(2.0, 1e-2, 100);
        let phi = MotilitySpec::Constant { c: 1.0 };
        assert_eq!(weak_residual(&states, &phi, &TestFunction::zero(1.0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn stationary_state_against_temporal_test_function() {
        let states = stationary(1.5, 1e-3, 1000);
        let phi = MotilitySpec::Constant { c: 1.0 };
        let (ru, rv) = weak_residual(&states, &phi, &TestFunction::temporal_only(1.0)).unwrap();
        assert!(ru < 1e-6, "{ru}");
        assert_eq!(rv, 0.0);
    }

    #[test]
    fn support_past_horizon_is_rejected() {
        let states = stationary(1.0, 0.1, 5);
        let phi = MotilitySpec::Constant { c: 1.0 };
        assert!(matches!(
            weak_residual(&states, &phi, &TestFunction::temporal_only(1.0)),
            Err(DiagnosticsError::SupportBeyondHorizon { .. })
        ));
        assert!(weak_residual(&states[..1], &phi, &TestFunction::zero(0.1)).is_err());
    }
}

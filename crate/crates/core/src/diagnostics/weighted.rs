use serde::{Deserialize, Serialize};

use super::{weighted_sum, DiagnosticsError};
use crate::model::MotilityBounds;
use crate::stepper::SimState;

/// Parameters of `∫ u^p (δ − v)^{-κ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedParams {
    pub p: f64,
    pub kappa: f64,
    pub delta: f64,
}

impl WeightedParams {
    /// `p (c2+1)^2 κ^2 / (2 (p-1) c1) ≤ κ / 2`
    pub fn satisfies_kappa_condition(&self, b: &MotilityBounds) -> bool {
        let lhs = self.p * (b.c2 + 1.0).powi(2) * self.kappa * self.kappa / (2.0 * (self.p - 1.0) * b.c1);
        lhs <= self.kappa / 2.0 * (1.0 + 1e-12)
    }

    /// `p c3 δ ≤ 1/2` and `(p-1) c3 δ + κ δ ≤ κ`
    pub fn satisfies_delta_conditions(&self, b: &MotilityBounds) -> bool {
        self.p * b.c3 * self.delta <= 0.5
            && (self.p - 1.0) * b.c3 * self.delta + self.kappa * self.delta <= self.kappa
    }
}

pub const DELTA_SAFETY: f64 = 0.99;

/// Largest admissible `κ` and 99% of the largest admissible `δ`.
pub fn choose_weighted_params(p: f64, bounds: &MotilityBounds) -> Result<WeightedParams, DiagnosticsError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(DiagnosticsError::BadExponent(p));
    }
    let MotilityBounds { c1, c2, c3, .. } = *bounds;
    if !(c1 > 0.0 && c2 >= c1 && c3 >= 0.0 && c2.is_finite() && c3.is_finite()) {
        return Err(DiagnosticsError::BadBounds(format!("c1 = {c1}, c2 = {c2}, c3 = {c3}")));
    }
    let kappa = (p - 1.0) * c1 / (p * (c2 + 1.0).powi(2));
    let first = if c3 > 0.0 { 1.0 / (2.0 * p * c3) } else { f64::INFINITY };
    let second = kappa / ((p - 1.0) * c3 + kappa);
    Ok(WeightedParams { p, kappa, delta: DELTA_SAFETY * first.min(second) })
}

/// `∫ u^p (δ − v)^{-κ}`; requires `max v < δ`.
pub fn weighted_functional(state: &SimState, wp: &WeightedParams) -> Result<f64, DiagnosticsError> {
    let max_v = state.v.max();
    if !(max_v < wp.delta) {
        return Err(DiagnosticsError::SignalTooLarge { max_v, delta: wp.delta });
    }
    Ok(weighted_sum(state.grid(), state.u.values(), state.v.values(), wp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};

    fn bounds(c1: f64, c2: f64, c3: f64) -> MotilityBounds {
        MotilityBounds { c1, c2, c3, m: 1.0 }
    }

    #[test]
    fn closed_form_choices() {
        let wp = choose_weighted_params(2.0, &bounds(1.0, 1.0, 0.0)).unwrap();
        assert!((wp.kappa - 0.125).abs() < 1e-15);
        assert!((wp.delta - 0.99).abs() < 1e-15);

        let wp = choose_weighted_params(2.0, &bounds(1.0, 1.0, 1.0)).unwrap();
        assert!((wp.kappa - 0.125).abs() < 1e-15);
        assert!((wp.delta - 0.99 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_p() {
        assert_eq!(choose_weighted_params(1.0, &bounds(1.0, 1.0, 1.0)), Err(DiagnosticsError::BadExponent(1.0)));
        assert!(choose_weighted_params(2.0, &bounds(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn functional_values() {
        let g = Grid::unit_1d(10).unwrap();
        let st = |u: f64, v: f64| SimState { u: Field::constant(&g, u), v: Field::constant(&g, v), t: 0.0, epsilon: 0.0 };
        let wp = WeightedParams { p: 2.0, kappa: 1.0, delta: 0.5 };
        assert!((weighted_functional(&st(1.0, 0.0), &wp).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(weighted_functional(&st(0.0, 0.0), &wp).unwrap(), 0.0);
        let wp2 = WeightedParams { p: 2.0, kappa: 2.0, delta: 0.5 };
        assert!((weighted_functional(&st(1.0, 0.25), &wp2).unwrap() - 16.0).abs() < 1e-10);
        assert!(matches!(weighted_functional(&st(1.0, 0.5), &wp), Err(DiagnosticsError::SignalTooLarge { .. })));
    }
}

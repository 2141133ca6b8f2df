use serde::{Deserialize, Serialize};

use super::DiagnosticsRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub threshold: f64,
    /// First record time from which the metric stays at or below the
    /// threshold; `None` if never reached.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    /// `(t, ‖u − ū0‖∞, ‖v‖∞)`
    pub series: Vec<(f64, f64, f64)>,
    pub v_crossings: Vec<ThresholdCrossing>,
    pub u_crossings: Vec<ThresholdCrossing>,
}

pub fn first_time_below(series: &[(f64, f64)], threshold: f64) -> Option<f64> {
    // scan backwards for the last violation
    match series.iter().rposition(|&(_, v)| !(v <= threshold)) {
        None => series.first().map(|p| p.0),
        Some(i) => series.get(i + 1).map(|p| p.0),
    }
}

/// Distance to the semitrivial equilibrium `(ū0, 0)` over time, and the
/// times at which each configured threshold is reached for good.
pub fn stabilization_metrics(
    records: &[DiagnosticsRecord],
    v_thresholds: &[f64],
    u_thresholds: &[f64],
) -> StabilizationReport {
    let series: Vec<_> = records.iter().map(|r| (r.t, r.stab_u, r.stab_v)).collect();
    let u: Vec<_> = series.iter().map(|&(t, su, _)| (t, su)).collect();
    let v: Vec<_> = series.iter().map(|&(t, _, sv)| (t, sv)).collect();
    let cross = |s: &[(f64, f64)], th: &[f64]| {
        th.iter().map(|&threshold| ThresholdCrossing { threshold, time: first_time_below(s, threshold) }).collect()
    };
    StabilizationReport { v_crossings: cross(&v, v_thresholds), u_crossings: cross(&u, u_thresholds), series }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_times() {
        let s = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.2), (3.0, 0.05)];
        assert_eq!(first_time_below(&s, 0.6), Some(1.0));
        assert_eq!(first_time_below(&s, 0.1), Some(3.0));
        assert_eq!(first_time_below(&s, 0.01), None);
        assert_eq!(first_time_below(&s, 2.0), Some(0.0));
        // a later excursion pushes the crossing past it
        let s = vec![(0.0, 1.0), (1.0, 0.1), (2.0, 0.3), (3.0, 0.1)];
        assert_eq!(first_time_below(&s, 0.2), Some(3.0));
        assert_eq!(first_time_below(&[], 1.0), None);
    }
}

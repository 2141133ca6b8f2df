use super::DiagnosticsError;

/// Unit window for `∫_{(t-1)_+}^t`.
pub const DEFAULT_WINDOW: f64 = 1.0;

/// Time-ordered samples of a scalar functional.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSeries {
    pub samples: Vec<(f64, f64)>,
    pub window: f64,
}

impl WindowSeries {
    pub fn new(samples: Vec<(f64, f64)>, window: f64) -> Result<Self, DiagnosticsError> {
        let s = WindowSeries { samples, window };
        s.validate()?;
        Ok(s)
    }

    pub fn unit(samples: Vec<(f64, f64)>) -> Result<Self, DiagnosticsError> {
        Self::new(samples, DEFAULT_WINDOW)
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.window > 0.0) {
            return Err(DiagnosticsError::BadWindow(self.window));
        }
        if self.samples.len() < 2 {
            return Err(DiagnosticsError::TooFewSamples(self.samples.len()));
        }
        if let Some(i) = self.samples.windows(2).position(|w| !(w[1].0 > w[0].0)) {
            return Err(DiagnosticsError::NonIncreasingTimes(i + 1));
        }
        Ok(())
    }
}

/// `(t_i, ∫_{(t_i - window)_+}^{t_i} f)` at every sample time, integrating
/// the piecewise-linear interpolant of the samples exactly.
pub fn sliding_window_series(series: &WindowSeries) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    series.validate()?;
    let s = &series.samples;
    let mut cumulative = Vec::with_capacity(s.len());
    cumulative.push(0.0);
    for w in s.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1));
    }
    // antiderivative of the interpolant at an arbitrary a within the range
    let at = |a: f64| -> f64 {
        let j = match s.binary_search_by(|probe| probe.0.total_cmp(&a)) {
            Ok(j) => return cumulative[j],
            Err(0) => return 0.0,
            Err(j) => j - 1,
        };
        let (t0, f0) = s[j];
        let (t1, f1) = s[j + 1];
        let fa = f0 + (f1 - f0) * (a - t0) / (t1 - t0);
        cumulative[j] + 0.5 * (a - t0) * (f0 + fa)
    };
    let start = s[0].0;
    Ok(s.iter()
        .enumerate()
        .map(|(i, &(t, _))| {
            let lower = (t - series.window).max(0.0).max(start);
            (t, cumulative[i] - at(lower))
        })
        .collect())
}

pub fn sliding_window_sup(series: &WindowSeries) -> Result<f64, DiagnosticsError> {
    Ok(sliding_window_series(series)?.into_iter().fold(f64::NEG_INFINITY, |m, (_, v)| m.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let samples = (0..=500).map(|i| (i as f64 * 0.01, 3.0)).collect();
        let sup = sliding_window_sup(&WindowSeries::unit(samples).unwrap()).unwrap();
        assert!((sup - 3.0).abs() < 1e-12);
    }

    #[test]
    fn decaying_exponential_peaks_at_one() {
        let samples: Vec<_> = (0..=5000).map(|i| {
            let t = i as f64 * 1e-3;
            (t, (-t).exp())
        }).collect();
        let series = sliding_window_series(&WindowSeries::unit(samples).unwrap()).unwrap();
        let (t_max, sup) = series.iter().copied().fold((0.0, f64::NEG_INFINITY), |m, p| if p.1 > m.1 { p } else { m });
        assert!((sup - (1.0 - (-1f64).exp())).abs() < 1e-3);
        assert!((t_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn off_grid_lower_limit_is_interpolated() {
        // f(t) = t sampled at 0, 0.3, 0.6, ..., integral over [t-1, t] = t - 1/2
        let samples: Vec<_> = (0..=10).map(|i| (0.3 * i as f64, 0.3 * i as f64)).collect();
        let series = sliding_window_series(&WindowSeries::unit(samples).unwrap()).unwrap();
        for &(t, v) in series.iter().filter(|(t, _)| *t >= 1.0) {
            assert!((v - (t - 0.5)).abs() < 1e-12, "{t}: {v}");
        }
    }

    #[test]
    fn rejects_bad_series() {
        assert_eq!(WindowSeries::unit(vec![(0.0, 1.0)]).unwrap_err(), DiagnosticsError::TooFewSamples(1));
        assert!(matches!(
            WindowSeries::unit(vec![(0.0, 1.0), (0.0, 2.0)]),
            Err(DiagnosticsError::NonIncreasingTimes(1))
        ));
        assert!(WindowSeries::new(vec![(0.0, 1.0), (1.0, 1.0)], 0.0).is_err());
    }
}

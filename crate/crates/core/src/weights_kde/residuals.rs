use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, TimeSeries};

/// Residuals `ε_i = X_i - r_θ(X_{i-1})`, `i = 1..=n`, under a fitted `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    residuals: Vec<f64>,
    theta_hat: ModelSpec,
}

impl ResidualSet {
    pub fn new(series: &TimeSeries, spec: &ModelSpec) -> Result<Self> {
        if series.order() != spec.order() {
            return Err(Error::InvalidArgument(format!(
                "series order {} does not match model order {}",
                series.order(),
                spec.order()
            )));
        }
        let residuals = series.transitions().map(|(x, y)| y - spec.regression_value(x)).collect();
        Ok(Self { residuals, theta_hat: spec.clone() })
    }

    /// Wraps precomputed residuals.
    pub fn from_values(residuals: Vec<f64>, spec: &ModelSpec) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::InvalidArgument("at least one residual is required".into()));
        }
        if residuals.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("residuals must be finite".into()));
        }
        Ok(Self { residuals, theta_hat: spec.clone() })
    }

    pub fn values(&self) -> &[f64] {
        &self.residuals
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.theta_hat
    }

    pub fn min(&self) -> f64 {
        self.residuals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovation::InnovationDist;
    use crate::model::{fit, simulate_series, Family};

    #[test]
    fn noiseless_series_has_zero_residuals() {
        let spec = ModelSpec::ar1(0.5).unwrap();
        let mut v = vec![2.0];
        for _ in 0..10 {
            v.push(0.5 * v.last().unwrap());
        }
        let r = ResidualSet::new(&TimeSeries::new(v, 1).unwrap(), &spec).unwrap();
        assert!(r.values().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn single_step_arithmetic() {
        let spec = ModelSpec::ar1(0.5).unwrap();
        let r = ResidualSet::new(&TimeSeries::new(vec![1.0, 0.7], 1).unwrap(), &spec).unwrap();
        assert!((r.values()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn least_squares_residuals_are_orthogonal_to_lags() {
        let spec = ModelSpec::ar1(0.5).unwrap();
        let series = simulate_series(&spec, InnovationDist::StdNormal, 1000, 100, 5).unwrap();
        let fitted = fit(&series, &Family::ar1()).unwrap();
        let r = ResidualSet::new(&series, &fitted).unwrap();
        let dot: f64 = r.values().iter().zip(series.values()).map(|(e, x)| e * x).sum();
        assert!(dot.abs() < 1e-9, "{dot}");
    }

    #[test]
    fn order_mismatch_is_rejected() {
        let spec = ModelSpec::ar(vec![0.1, 0.2]).unwrap();
        let series = TimeSeries::new(vec![1.0, 2.0, 3.0], 1).unwrap();
        assert!(ResidualSet::new(&series, &spec).is_err());
    }
}

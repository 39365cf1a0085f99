use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ElWeights, ResidualSet};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Symmetric kernel densities supported on `[-1, 1]`.
///
/// Only the triweight kernel is twice continuously differentiable on the
/// whole line; the others are kept for sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Triweight,
    Biweight,
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn density(&self, u: f64) -> f64 {
        if !(u.abs() <= 1.0) {
            return 0.0;
        }
        let s = 1.0 - u * u;
        match self {
            Kernel::Triweight => 35.0 / 32.0 * s * s * s,
            Kernel::Biweight => 15.0 / 16.0 * s * s,
            Kernel::Epanechnikov => 0.75 * s,
        }
    }

    /// `K(v) = ∫_{-1}^{v} k(u) du`, equal to 0 below -1 and 1 above 1.
    #[inline]
    pub fn cdf(&self, v: f64) -> f64 {
        if v <= -1.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let v2 = v * v;
        match self {
            Kernel::Triweight => {
                0.5 + 35.0 / 32.0 * v * (1.0 + v2 * (-1.0 + v2 * (0.6 - v2 / 7.0)))
            }
            Kernel::Biweight => 0.5 + 15.0 / 16.0 * v * (1.0 + v2 * (-2.0 / 3.0 + v2 / 5.0)),
            Kernel::Epanechnikov => 0.5 + 0.75 * v * (1.0 - v2 / 3.0),
        }
    }

    pub fn is_twice_differentiable(&self) -> bool {
        matches!(self, Kernel::Triweight)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Triweight => "triweight",
            Kernel::Biweight => "biweight",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triweight" => Ok(Kernel::Triweight),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Bandwidth {
    /// `b_n = c · n^(-beta)`.
    Rate { c: f64, beta: f64 },
    Fixed { value: f64 },
}

impl Bandwidth {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Bandwidth::Rate { c, beta } => c * (n as f64).powf(-beta),
            Bandwidth::Fixed { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    /// Number of midpoint cells on `[-1, 1]` for the Riemann sums.
    pub riemann_n: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { kernel: Kernel::Triweight, bandwidth: Bandwidth::Rate { c: 2.0, beta: 0.25 }, riemann_n: 100 }
    }
}

impl KernelConfig {
    pub fn with_rate(kernel: Kernel, c: f64, beta: f64, riemann_n: usize) -> Result<Self> {
        let cfg = Self { kernel, bandwidth: Bandwidth::Rate { c, beta }, riemann_n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_fixed(kernel: Kernel, bandwidth: f64, riemann_n: usize) -> Result<Self> {
        let cfg = Self { kernel, bandwidth: Bandwidth::Fixed { value: bandwidth }, riemann_n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.bandwidth {
            Bandwidth::Rate { c, beta } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bandwidth constant must be > 0, got {c}")));
                }
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidArgument(format!("bandwidth exponent must lie in (0, 1), got {beta}")));
                }
            }
            Bandwidth::Fixed { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {value}")));
                }
            }
        }
        if self.riemann_n < 2 {
            return Err(Error::InvalidArgument("Riemann grid needs at least 2 cells".into()));
        }
        Ok(())
    }

    pub fn bandwidth(&self, n: usize) -> f64 {
        self.bandwidth.at(n)
    }
}

fn weight_slice<'a>(residuals: &ResidualSet, weights: Option<&'a ElWeights>) -> Option<&'a [f64]> {
    weights.map(|w| {
        assert_eq!(w.len(), residuals.len(), "weights and residuals differ in length");
        w.values()
    })
}

/// Weighted kernel density `(1/n) Σ w_i k_b(y - ε_i)`; `None` means unit weights.
pub fn kde(residuals: &ResidualSet, weights: Option<&ElWeights>, config: &KernelConfig, y: f64) -> f64 {
    let eps = residuals.values();
    let w = weight_slice(residuals, weights);
    let b = config.bandwidth(eps.len());
    let mut acc = CompensatedSum::new();
    for (i, &e) in eps.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i]);
        acc.add(wi * config.kernel.density((y - e) / b));
    }
    acc.value() / (eps.len() as f64 * b)
}

/// Distribution function of [`kde`]: `(1/n) Σ w_i K((y - ε_i)/b)`.
pub fn smoothed_cdf(residuals: &ResidualSet, weights: Option<&ElWeights>, config: &KernelConfig, y: f64) -> f64 {
    let eps = residuals.values();
    let w = weight_slice(residuals, weights);
    let b = config.bandwidth(eps.len());
    let mut acc = CompensatedSum::new();
    for (i, &e) in eps.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i]);
        acc.add(wi * config.kernel.cdf((y - e) / b));
    }
    acc.value() / eps.len() as f64
}

/// Residual distribution function prepared for repeated evaluation.
///
/// Residuals are sorted once with prefix sums of their weights, so each
/// evaluation only touches residuals within one bandwidth of the argument.
/// A zero bandwidth gives the weighted empirical distribution function.
#[derive(Debug, Clone)]
pub struct ResidualCdf {
    sorted: Vec<f64>,
    weights: Vec<f64>,
    prefix: Vec<f64>,
    kernel: Kernel,
    bandwidth: f64,
    inv_n: f64,
}

impl ResidualCdf {
    pub fn new(residuals: &[f64], weights: &[f64], kernel: Kernel, bandwidth: f64) -> Self {
        assert_eq!(residuals.len(), weights.len());
        let mut order: Vec<usize> = (0..residuals.len()).collect();
        order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| residuals[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        let mut acc = CompensatedSum::new();
        prefix.push(0.0);
        for &w in &weights {
            acc.add(w);
            prefix.push(acc.value());
        }
        Self { sorted, weights, prefix, kernel, bandwidth, inv_n: 1.0 / residuals.len() as f64 }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let b = self.bandwidth;
        if b == 0.0 {
            let k = self.sorted.partition_point(|&e| e <= y);
            return self.prefix[k] * self.inv_n;
        }
        let start = self.sorted.partition_point(|&e| e <= y - b);
        let end = self.sorted.partition_point(|&e| e < y + b);
        let mut acc = self.prefix[start];
        for j in start..end {
            acc += self.weights[j] * self.kernel.cdf((y - self.sorted[j]) / b);
        }
        acc * self.inv_n
    }

    /// Value of the distribution function beyond the largest residual.
    pub fn upper_limit(&self) -> f64 {
        self.prefix[self.prefix.len() - 1] * self.inv_n
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::numeric::integrate_pieces;
    use crate::weights_kde::solve_el_weights;
    use proptest::prelude::*;

    fn set(values: Vec<f64>) -> ResidualSet {
        ResidualSet::from_values(values, &ModelSpec::ar1(0.5).unwrap()).unwrap()
    }

    #[test]
    fn kernel_cdfs_integrate_density() {
        for k in [Kernel::Triweight, Kernel::Biweight, Kernel::Epanechnikov] {
            assert_eq!(k.cdf(-1.0), 0.0);
            assert_eq!(k.cdf(1.0), 1.0);
            assert!((k.cdf(0.0) - 0.5).abs() < 1e-15);
            assert!((k.cdf(1.0 - 1e-15) - 1.0).abs() < 1e-12);
            for &v in &[-0.8, -0.3, 0.1, 0.65] {
                let quad = integrate_pieces(|u| k.density(u), &[-1.0, v], 1e-14);
                assert!((quad - k.cdf(v)).abs() < 1e-13, "{k} at {v}");
            }
        }
    }

    #[test]
    fn triweight_is_c2_at_the_edges() {
        let k = Kernel::Triweight;
        let h = 1e-4;
        // One-sided difference: error is about h |k'''(1)| = 52.5 h.
        let second = (k.density(1.0 - 2.0 * h) - 2.0 * k.density(1.0 - h) + k.density(1.0)) / (h * h);
        assert!(second.abs() < 100.0 * h);
        let epan = Kernel::Epanechnikov;
        let jump = (epan.density(1.0 - 2.0 * h) - 2.0 * epan.density(1.0 - h) + epan.density(1.0)) / (h * h);
        assert!(jump.abs() > 1.0);
        assert!(k.is_twice_differentiable());
        assert!(!Kernel::Biweight.is_twice_differentiable());
    }

    #[test]
    fn kde_point_mass() {
        let r = set(vec![0.0]);
        let cfg = KernelConfig::with_fixed(Kernel::Triweight, 0.4, 100).unwrap();
        assert!((kde(&r, None, &cfg, 0.0) - 35.0 / 32.0 / 0.4).abs() < 1e-14);
        assert_eq!(kde(&r, None, &cfg, 0.41), 0.0);
        assert_eq!(smoothed_cdf(&r, None, &cfg, 0.0), 0.5);
    }

    #[test]
    fn kde_integrates_to_one() {
        let eps = vec![-1.3, -0.2, 0.05, 0.4, 2.2];
        let r = set(eps.clone());
        let cfg = KernelConfig::default();
        let b = cfg.bandwidth(eps.len());
        let mut breaks: Vec<f64> = eps.iter().flat_map(|e| [e - b, *e, e + b]).collect();
        breaks.sort_by(f64::total_cmp);
        let mass = integrate_pieces(|y| kde(&r, None, &cfg, y), &breaks, 1e-13);
        assert!((mass - 1.0).abs() < 1e-8);

        let w = solve_el_weights(&r);
        let wmass = integrate_pieces(|y| kde(&r, Some(&w), &cfg, y), &breaks, 1e-13);
        assert!((wmass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn smoothed_cdf_is_integral_of_kde() {
        let eps = vec![-0.9, -0.1, 0.3, 0.35, 1.1, 1.5];
        let r = set(eps.clone());
        let w = solve_el_weights(&r);
        let cfg = KernelConfig::with_fixed(Kernel::Triweight, 0.5, 100).unwrap();
        let lo = -0.9 - 0.5;
        for &y in &[-1.0, 0.0, 0.33, 1.2, 2.5] {
            let mut breaks: Vec<f64> = eps.iter().flat_map(|e| [e - 0.5, *e, e + 0.5]).filter(|v| *v < y).collect();
            breaks.push(lo);
            breaks.push(y);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let quad = integrate_pieces(|t| kde(&r, Some(&w), &cfg, t), &breaks, 1e-13);
            assert!((quad - smoothed_cdf(&r, Some(&w), &cfg, y)).abs() < 1e-8, "at {y}");
        }
    }

    #[test]
    fn smoothed_cdf_limits() {
        let eps = vec![-1.0, 0.2, 0.5];
        let r = set(eps);
        let w = solve_el_weights(&r);
        let cfg = KernelConfig::with_fixed(Kernel::Triweight, 0.3, 100).unwrap();
        assert_eq!(smoothed_cdf(&r, Some(&w), &cfg, -1.3), 0.0);
        assert!((smoothed_cdf(&r, Some(&w), &cfg, 0.8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_bandwidth_recovers_weighted_ecdf() {
        let eps = vec![-1.0, 0.2, 0.5, 0.9];
        let r = set(eps.clone());
        let w = solve_el_weights(&r);
        let cfg = KernelConfig::with_fixed(Kernel::Triweight, 1e-9, 100).unwrap();
        for &y in &[-2.0, -0.5, 0.3, 0.7, 3.0] {
            let ecdf: f64 = eps.iter().zip(w.values()).filter(|(e, _)| **e <= y).map(|(_, w)| w).sum::<f64>() / 4.0;
            assert!((smoothed_cdf(&r, Some(&w), &cfg, y) - ecdf).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_cdf_matches_direct_sum() {
        let eps = vec![-1.0, 0.2, 0.5, 0.9, 0.95, -0.3];
        let r = set(eps.clone());
        let w = solve_el_weights(&r);
        let cfg = KernelConfig::with_fixed(Kernel::Biweight, 0.4, 100).unwrap();
        let fast = ResidualCdf::new(&eps, w.values(), Kernel::Biweight, 0.4);
        for k in 0..60 {
            let y = -2.0 + 0.07 * k as f64;
            assert!((fast.eval(y) - smoothed_cdf(&r, Some(&w), &cfg, y)).abs() < 1e-14);
        }
        let ecdf = ResidualCdf::new(&eps, &[1.0; 6], Kernel::Triweight, 0.0);
        assert_eq!(ecdf.eval(0.2), 3.0 / 6.0);
        assert_eq!(ecdf.eval(0.19), 2.0 / 6.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(KernelConfig::with_rate(Kernel::Triweight, 0.0, 0.25, 10).is_err());
        assert!(KernelConfig::with_rate(Kernel::Triweight, 1.0, 1.0, 10).is_err());
        assert!(KernelConfig::with_fixed(Kernel::Triweight, 1.0, 1).is_err());
        let cfg = KernelConfig::default();
        assert!((cfg.bandwidth(16) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn smoothed_cdf_is_monotone(eps in prop::collection::vec(-3.0f64..3.0, 1..40), b in 0.01f64..2.0) {
            let r = set(eps.clone());
            let w = solve_el_weights(&r);
            let cdf = ResidualCdf::new(&eps, w.values(), Kernel::Triweight, b);
            let mut prev = 0.0;
            for k in 0..200 {
                let y = -6.0 + 0.06 * k as f64;
                let v = cdf.eval(y);
                prop_assert!(v >= prev - 1e-14);
                prop_assert!(v >= 0.0);
                prev = v;
            }
            prop_assert!((cdf.eval(10.0) - w.total() / eps.len() as f64).abs() < 1e-12);
        }
    }
}

//! Plain, weighted, smoothed and smoothed+weighted von Mises estimators of
//! lag-one and lag-two conditional expectations, distribution functions and
//! quantiles.
//!
//! With residuals `ε_i`, weights `w_i` (all one for the unweighted variants)
//! and `x1 = y + r(x)` the first future value, the estimators are
//!
//! * lag one: `∫ q(y + r(x)) dF(y)`,
//! * lag two: `∫∫ q(x1, z + r(x_{-1}, x1)) dF(y) dF(z)`,
//!
//! where `F` is the (weighted) empirical distribution of the residuals for the
//! `U`/`W` variants and its kernel-smoothed version for `S`/`SW`. Smoothed
//! integrals are evaluated with a midpoint rule on the kernel support.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numeric::{compensated_sum, left_inverse, midpoints, CompensatedSum};
use crate::weights_kde::{ElWeights, KernelConfig, ResidualCdf, ResidualSet};

const QUANTILE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    U,
    W,
    S,
    SW,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::U, Variant::W, Variant::S, Variant::SW];

    pub fn weighted(&self) -> bool {
        matches!(self, Variant::W | Variant::SW)
    }

    pub fn smoothed(&self) -> bool {
        matches!(self, Variant::S | Variant::SW)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::U => "U",
            Variant::W => "W",
            Variant::S => "S",
            Variant::SW => "SW",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "U" => Ok(Variant::U),
            "W" => Ok(Variant::W),
            "S" => Ok(Variant::S),
            "SW" => Ok(Variant::SW),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

pub type Lag1Fn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Lag2Fn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// What to predict.
#[derive(Clone)]
pub enum Target {
    /// `P(X_{n+1} <= t | X_n = x)`.
    Cdf1(f64),
    /// `P(X_{n+1} <= t, X_{n+2} <= u | X_n = x)`.
    Cdf2Joint(f64, f64),
    /// `P(X_{n+2} <= u | X_n = x)`.
    Cdf2Marginal(f64),
    Quantile1(f64),
    Quantile2(f64),
    /// `E(X_{n+1}^γ | X_n = x)`, or of `|X_{n+1}|^γ` when `absolute`.
    Moment1 { exponent: f64, absolute: bool },
    Custom1(Lag1Fn),
    Custom2(Lag2Fn),
}

impl Target {
    pub fn lag(&self) -> usize {
        match self {
            Target::Cdf1(_) | Target::Quantile1(_) | Target::Moment1 { .. } | Target::Custom1(_) => 1,
            _ => 2,
        }
    }

    pub fn is_cdf(&self) -> bool {
        matches!(self, Target::Cdf1(_) | Target::Cdf2Joint(..) | Target::Cdf2Marginal(_))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Target::Quantile1(p) | Target::Quantile2(p) if !(p > 0.0 && p < 1.0) => {
                Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {p}")))
            }
            Target::Moment1 { exponent, absolute } => {
                if !(exponent >= 1.0 && exponent.is_finite()) {
                    return Err(Error::InvalidArgument(format!("moment exponent must be >= 1, got {exponent}")));
                }
                if !absolute && exponent.fract() != 0.0 {
                    return Err(Error::InvalidArgument(
                        "non-integer moments need the absolute flag".into(),
                    ));
                }
                Ok(())
            }
            Target::Cdf1(t) | Target::Cdf2Marginal(t) if t.is_nan() => {
                Err(Error::InvalidArgument("threshold is NaN".into()))
            }
            Target::Cdf2Joint(t, u) if t.is_nan() || u.is_nan() => {
                Err(Error::InvalidArgument("threshold is NaN".into()))
            }
            _ => Ok(()),
        }
    }

    /// Parses `cdf:T`, `joint:T,U`, `quantile:P`, `moment:G` or `absmoment:G`
    /// for the given lag (`joint` is lag two only, moments lag one only).
    pub fn parse(spec: &str, lag: usize) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(msg);
        let (kind, rest) = spec.split_once(':').ok_or_else(|| bad(format!("target `{spec}` lacks `kind:value`")))?;
        let nums = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| bad(format!("target `{spec}` has a non-numeric value")))?;
        let one = || match nums.as_slice() {
            [v] => Ok(*v),
            _ => Err(bad(format!("target `{spec}` takes one value"))),
        };
        let target = match (kind.trim().to_ascii_lowercase().as_str(), lag) {
            ("cdf", 1) => Target::Cdf1(one()?),
            ("cdf", 2) => Target::Cdf2Marginal(one()?),
            ("joint", 2) => match nums.as_slice() {
                [t, u] => Target::Cdf2Joint(*t, *u),
                _ => return Err(bad("joint target takes two values".into())),
            },
            ("quantile", 1) => Target::Quantile1(one()?),
            ("quantile", 2) => Target::Quantile2(one()?),
            ("moment", 1) => Target::Moment1 { exponent: one()?, absolute: false },
            ("absmoment", 1) => Target::Moment1 { exponent: one()?, absolute: true },
            (other, _) => return Err(bad(format!("target `{other}` is not available at lag {lag}"))),
        };
        target.validate()?;
        Ok(target)
    }

    pub fn describe(&self) -> String {
        match self {
            Target::Cdf1(t) => format!("cdf1(t={t})"),
            Target::Cdf2Joint(t, u) => format!("cdf2joint(t={t},u={u})"),
            Target::Cdf2Marginal(u) => format!("cdf2(u={u})"),
            Target::Quantile1(p) => format!("quantile1(p={p})"),
            Target::Quantile2(p) => format!("quantile2(p={p})"),
            Target::Moment1 { exponent, absolute: false } => format!("moment1(gamma={exponent})"),
            Target::Moment1 { exponent, absolute: true } => format!("absmoment1(gamma={exponent})"),
            Target::Custom1(_) => "custom1".to_string(),
            Target::Custom2(_) => "custom2".to_string(),
        }
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[derive(Debug, Clone)]
pub struct PredictionTask {
    pub x: Vec<f64>,
    pub target: Target,
}

impl PredictionTask {
    pub fn new(x: Vec<f64>, target: Target) -> Result<Self> {
        target.validate()?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("conditioning values must be finite".into()));
        }
        Ok(Self { x, target })
    }

    pub fn lag(&self) -> usize {
        self.target.lag()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lambda: f64,
    pub weights_solved: bool,
    pub bandwidth: f64,
    pub riemann_n: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// Reported values; distribution-function targets are clamped to `[0, 1]`.
    pub values: BTreeMap<Variant, f64>,
    /// Values before clamping.
    pub raw: BTreeMap<Variant, f64>,
    pub diagnostics: Diagnostics,
}

/// How lag-two smoothed integrals of indicator targets are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Lag2Quadrature {
    /// Integrate the inner indicator in closed form through the kernel
    /// distribution function; cost `n² N`.
    #[default]
    Collapsed,
    /// Full midpoint rule in both coordinates; cost `n² N²`.
    Full,
}

/// Bundles the fitted model, residuals, weights and smoothing setup.
pub struct Predictor<'a> {
    spec: &'a ModelSpec,
    residuals: &'a ResidualSet,
    weights: &'a ElWeights,
    unit: Vec<f64>,
    config: KernelConfig,
    quadrature: Lag2Quadrature,
    nodes: Vec<f64>,
    node_weights: Vec<f64>,
}

impl<'a> Predictor<'a> {
    pub fn new(spec: &'a ModelSpec, residuals: &'a ResidualSet, weights: &'a ElWeights, config: KernelConfig) -> Self {
        assert_eq!(residuals.len(), weights.len(), "weights and residuals differ in length");
        let nodes = midpoints(config.riemann_n);
        // Midpoint weights proportional to k(u_s), rescaled to sum to one.
        let raw: Vec<f64> = nodes.iter().map(|&u| config.kernel.density(u)).collect();
        let total = compensated_sum(raw.iter().copied());
        let node_weights = raw.iter().map(|k| k / total).collect();
        Self {
            spec,
            residuals,
            weights,
            unit: vec![1.0; residuals.len()],
            config,
            quadrature: Lag2Quadrature::default(),
            nodes,
            node_weights,
        }
    }

    pub fn with_lag2_quadrature(mut self, quadrature: Lag2Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.config.bandwidth(self.n())
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    fn weights_for(&self, weighted: bool) -> &[f64] {
        if weighted {
            self.weights.values()
        } else {
            &self.unit
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.order() {
            return Err(Error::InvalidArgument(format!(
                "conditioning vector has length {}, model order is {}",
                x.len(),
                self.spec.order()
            )));
        }
        Ok(())
    }

    fn residual_cdf(&self, variant: Variant) -> ResidualCdf {
        let b = if variant.smoothed() { self.bandwidth() } else { 0.0 };
        ResidualCdf::new(self.residuals.values(), self.weights_for(variant.weighted()), self.config.kernel, b)
    }

    /// Unsmoothed lag-one estimator `(1/n) Σ w_i q(ε_i + r(x))`.
    pub fn lag1_expectation<Q: Fn(f64) -> f64>(&self, x: &[f64], q: Q, weighted: bool) -> f64 {
        let shift = self.spec.regression_value(x);
        let w = self.weights_for(weighted);
        let acc: CompensatedSum =
            self.residuals.values().iter().zip(w).map(|(&e, &wi)| wi * q(e + shift)).collect();
        acc.value() / self.n() as f64
    }

    /// Smoothed lag-one estimator `∫ q(y + r(x)) f̃(y) dy` by the midpoint rule.
    pub fn lag1_smoothed<Q: Fn(f64) -> f64>(&self, x: &[f64], q: Q, weighted: bool) -> f64 {
        let shift = self.spec.regression_value(x);
        let b = self.bandwidth();
        let w = self.weights_for(weighted);
        let mut acc = CompensatedSum::new();
        for (&e, &wi) in self.residuals.values().iter().zip(w) {
            let mut inner = CompensatedSum::new();
            for (&u, &ku) in self.nodes.iter().zip(&self.node_weights) {
                inner.add(ku * q(e + b * u + shift));
            }
            acc.add(wi * inner.value());
        }
        acc.value() / self.n() as f64
    }

    /// Lag-one estimator of a general function for any variant.
    pub fn lag1<Q: Fn(f64) -> f64>(&self, x: &[f64], q: Q, variant: Variant) -> f64 {
        if variant.smoothed() {
            self.lag1_smoothed(x, q, variant.weighted())
        } else {
            self.lag1_expectation(x, q, variant.weighted())
        }
    }

    /// Lag-one conditional distribution function before clamping.
    pub fn lag1_cdf(&self, x: &[f64], t: f64, variant: Variant) -> f64 {
        self.residual_cdf(variant).eval(t - self.spec.regression_value(x))
    }

    /// `r(x_{-1}, x1)`, the regression value one step ahead.
    fn second_step(&self, x: &[f64], x1: f64, buf: &mut [f64]) -> f64 {
        if x.len() == 1 {
            return self.spec.regression_scalar(x1);
        }
        let p = x.len();
        buf[..p - 1].copy_from_slice(&x[1..]);
        buf[p - 1] = x1;
        self.spec.regression_value(buf)
    }

    /// First-step points `y` (residual plus smoothing offset) with their weights.
    fn first_step_points(&self, variant: Variant) -> Vec<(f64, f64)> {
        let w = self.weights_for(variant.weighted());
        let eps = self.residuals.values();
        if variant.smoothed() {
            let b = self.bandwidth();
            let mut pts = Vec::with_capacity(eps.len() * self.nodes.len());
            for (&e, &wi) in eps.iter().zip(w) {
                for (&u, &ku) in self.nodes.iter().zip(&self.node_weights) {
                    pts.push((e + b * u, wi * ku));
                }
            }
            pts
        } else {
            eps.iter().zip(w).map(|(&e, &wi)| (e, wi)).collect()
        }
    }

    /// Lag-two von Mises statistic of `q(X_{n+1}, X_{n+2})`.
    ///
    /// `U`/`W` evaluate the exact double sum over residual pairs; `S`/`SW`
    /// evaluate the midpoint rule in both coordinates.
    pub fn lag2_vonmises<Q>(&self, x: &[f64], q: Q, variant: Variant) -> f64
    where
        Q: Fn(f64, f64) -> f64 + Sync,
    {
        let shift = self.spec.regression_value(x);
        let outer = self.first_step_points(variant);
        let inner = self.first_step_points(variant);
        let n = self.n() as f64;
        let p = x.len();
        let parts: Vec<f64> = outer
            .par_iter()
            .map_init(
                || vec![0.0; p],
                |buf, &(y, wy)| {
                    let x1 = y + shift;
                    let m = self.second_step(x, x1, buf);
                    let acc: CompensatedSum = inner.iter().map(|&(z, wz)| wz * q(x1, z + m)).collect();
                    wy * acc.value()
                },
            )
            .collect();
        compensated_sum(parts) / (n * n)
    }

    /// Lag-two indicator target `1[X_{n+1} <= t] 1[X_{n+2} <= u]`, before
    /// clamping; `t = +∞` gives the marginal of `X_{n+2}`.
    pub fn lag2_cdf(&self, x: &[f64], t: f64, u: f64, variant: Variant) -> f64 {
        if variant.smoothed() && self.quadrature == Lag2Quadrature::Full {
            return self.lag2_vonmises(
                x,
                |a, c| if a <= t && c <= u { 1.0 } else { 0.0 },
                variant,
            );
        }
        let shift = self.spec.regression_value(x);
        let cdf = self.residual_cdf(variant);
        let outer = self.first_step_points(variant);
        let p = x.len();
        let parts: Vec<f64> = outer
            .par_iter()
            .map_init(
                || vec![0.0; p],
                |buf, &(y, wy)| {
                    let x1 = y + shift;
                    if x1 > t {
                        return 0.0;
                    }
                    let m = self.second_step(x, x1, buf);
                    wy * cdf.eval(u - m)
                },
            )
            .collect();
        compensated_sum(parts) / self.n() as f64
    }

    /// Conditional distribution function for a CDF target, clamped to `[0, 1]`.
    pub fn conditional_cdf(&self, x: &[f64], target: &Target, variant: Variant) -> Result<f64> {
        Ok(self.conditional_cdf_raw(x, target, variant)?.clamp(0.0, 1.0))
    }

    pub fn conditional_cdf_raw(&self, x: &[f64], target: &Target, variant: Variant) -> Result<f64> {
        self.check_state(x)?;
        target.validate()?;
        match *target {
            Target::Cdf1(t) => Ok(self.lag1_cdf(x, t, variant)),
            Target::Cdf2Joint(t, u) => Ok(self.lag2_cdf(x, t, u, variant)),
            Target::Cdf2Marginal(u) => Ok(self.lag2_cdf(x, f64::INFINITY, u, variant)),
            _ => Err(Error::Unsupported(format!("{} is not a distribution function", target.describe()))),
        }
    }

    /// Range outside of which the lag-`lag` distribution function is constant.
    fn support_bracket(&self, x: &[f64], lag: usize, variant: Variant) -> (f64, f64) {
        let b = if variant.smoothed() { self.bandwidth() } else { 0.0 };
        let lo_eps = self.residuals.min() - b;
        let hi_eps = self.residuals.max() + b;
        let shift = self.spec.regression_value(x);
        if lag == 1 {
            return (lo_eps + shift, hi_eps + shift);
        }
        let mut buf = vec![0.0; x.len()];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (y, _) in self.first_step_points(variant) {
            let m = self.second_step(x, y + shift, &mut buf);
            lo = lo.min(m);
            hi = hi.max(m);
        }
        (lo + lo_eps, hi + hi_eps)
    }

    /// Left-inverse `inf{t : F(t) >= prob}` of the lag-one or lag-two
    /// conditional distribution function, found by bisection.
    pub fn conditional_quantile(&self, x: &[f64], prob: f64, lag: usize, variant: Variant) -> Result<f64> {
        self.check_state(x)?;
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {prob}")));
        }
        let (lo, hi) = self.support_bracket(x, lag, variant);
        // Widen slightly so the bracket ends sit strictly outside the support.
        let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        let (lo, hi) = (lo - pad, hi + pad);
        let eval = |s: f64| -> f64 {
            match lag {
                1 => self.lag1_cdf(x, s, variant),
                _ => self.lag2_cdf(x, f64::INFINITY, s, variant),
            }
        };
        if lag != 1 && lag != 2 {
            return Err(Error::Unsupported(format!("lag {lag} (only 1 and 2 are implemented)")));
        }
        let top = eval(hi);
        if top < prob {
            return Err(Error::Unattainable { prob, max: top });
        }
        Ok(left_inverse(eval, prob, lo, hi, QUANTILE_TOLERANCE))
    }

    fn evaluate(&self, task: &PredictionTask, variant: Variant) -> Result<f64> {
        let x = &task.x;
        match &task.target {
            Target::Cdf1(_) | Target::Cdf2Joint(..) | Target::Cdf2Marginal(_) => {
                self.conditional_cdf_raw(x, &task.target, variant)
            }
            Target::Quantile1(p) => self.conditional_quantile(x, *p, 1, variant),
            Target::Quantile2(p) => self.conditional_quantile(x, *p, 2, variant),
            Target::Moment1 { exponent, absolute } => {
                let (g, abs) = (*exponent, *absolute);
                let q = move |y: f64| if abs { y.abs().powf(g) } else { y.powi(g as i32) };
                Ok(self.lag1(x, q, variant))
            }
            Target::Custom1(q) => Ok(self.lag1(x, |y| q(y), variant)),
            Target::Custom2(q) => Ok(self.lag2_vonmises(x, |a, b| q(a, b), variant)),
        }
    }

    /// Evaluates a task for each requested variant.
    pub fn predict(&self, task: &PredictionTask, variants: &[Variant]) -> Result<PredictionResult> {
        self.check_state(&task.x)?;
        task.target.validate()?;
        let mut values = BTreeMap::new();
        let mut raw = BTreeMap::new();
        for &variant in variants {
            let v = self.evaluate(task, variant)?;
            raw.insert(variant, v);
            values.insert(variant, if task.target.is_cdf() { v.clamp(0.0, 1.0) } else { v });
        }
        Ok(PredictionResult {
            values,
            raw,
            diagnostics: Diagnostics {
                lambda: self.weights.lambda(),
                weights_solved: self.weights.solved(),
                bandwidth: self.bandwidth(),
                riemann_n: self.config.riemann_n,
                n: self.n(),
            },
        })
    }
}

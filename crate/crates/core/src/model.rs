//! Parametric autoregression families, simulation and least-squares fitting.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovation::InnovationDist;
use crate::numeric::CompensatedSum;

pub const DEFAULT_BURN_IN: usize = 500;

/// Autoregression family. Nonlinear families are of order one with the
/// decay `gamma` or the `threshold` treated as known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Family {
    /// Linear AR(p), `r(x) = θ_1 X_{i-1} + … + θ_p X_{i-p}`.
    Ar { order: usize },
    /// Exponential AR(1), `r(x) = (θ_1 + θ_2 exp(-γ x²)) x`.
    Expar { gamma: f64 },
    /// Two-regime threshold AR(1), `r(x) = θ_1 x 1[x ≤ ξ] + θ_2 x 1[x > ξ]`.
    Setar { threshold: f64 },
}

impl Family {
    pub fn ar1() -> Self {
        Family::Ar { order: 1 }
    }

    /// Number of lagged values the regression function reads.
    pub fn order(&self) -> usize {
        match self {
            Family::Ar { order } => *order,
            _ => 1,
        }
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        match self {
            Family::Ar { order } => *order,
            _ => 2,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Family::Ar { order: 1 } => "ar1".to_string(),
            Family::Ar { order } => format!("ar{order}"),
            Family::Expar { .. } => "expar".to_string(),
            Family::Setar { .. } => "setar".to_string(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Ar { order } => write!(f, "AR({order})"),
            Family::Expar { gamma } => write!(f, "EXPAR(1), gamma = {gamma}"),
            Family::Setar { threshold } => write!(f, "SETAR(2,1,1), threshold = {threshold}"),
        }
    }
}

/// A family together with a parameter vector.
///
/// [`ModelSpec::new`] enforces the stationarity region; [`ModelSpec::fitted`]
/// only checks shape, since a least-squares estimate may land outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    family: Family,
    theta: Vec<f64>,
}

impl ModelSpec {
    pub fn new(family: Family, theta: Vec<f64>) -> Result<Self> {
        let spec = Self::fitted(family, theta)?;
        spec.check_stationary()?;
        Ok(spec)
    }

    pub fn fitted(family: Family, theta: Vec<f64>) -> Result<Self> {
        if family.order() == 0 {
            return Err(Error::InvalidModel("order must be positive".into()));
        }
        if theta.len() != family.dim() {
            return Err(Error::InvalidModel(format!(
                "{family} takes {} parameters, got {}",
                family.dim(),
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        match family {
            Family::Expar { gamma } if !(gamma.is_finite() && gamma >= 0.0) => {
                return Err(Error::InvalidModel(format!("EXPAR decay must be >= 0, got {gamma}")))
            }
            Family::Setar { threshold } if !threshold.is_finite() => {
                return Err(Error::InvalidModel("SETAR threshold must be finite".into()))
            }
            _ => {}
        }
        Ok(Self { family, theta })
    }

    pub fn ar1(theta: f64) -> Result<Self> {
        Self::new(Family::ar1(), vec![theta])
    }

    pub fn ar(coefficients: Vec<f64>) -> Result<Self> {
        Self::new(Family::Ar { order: coefficients.len() }, coefficients)
    }

    pub fn expar(theta1: f64, theta2: f64, gamma: f64) -> Result<Self> {
        Self::new(Family::Expar { gamma }, vec![theta1, theta2])
    }

    pub fn setar(theta1: f64, theta2: f64, threshold: f64) -> Result<Self> {
        Self::new(Family::Setar { threshold }, vec![theta1, theta2])
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn order(&self) -> usize {
        self.family.order()
    }

    pub fn is_stationary(&self) -> bool {
        self.check_stationary().is_ok()
    }

    pub fn check_stationary(&self) -> Result<()> {
        let t = &self.theta;
        let ok = match self.family {
            Family::Ar { .. } => ar_is_stationary(t),
            Family::Expar { .. } => t[0].abs() < 1.0,
            Family::Setar { .. } => t[0] < 1.0 && t[1] < 1.0 && t[0] * t[1] < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonStationary(format!("{} with theta = {:?}", self.family, t)))
        }
    }

    /// `r_θ(x)` where `x = (X_{i-p}, …, X_{i-1})`, oldest value first.
    pub fn regression_value(&self, x: &[f64]) -> f64 {
        let t = &self.theta;
        match self.family {
            Family::Ar { order } => {
                debug_assert_eq!(x.len(), order);
                let mut acc = 0.0;
                for k in 0..order {
                    acc += t[k] * x[order - 1 - k];
                }
                acc
            }
            Family::Expar { gamma } => {
                let v = x[x.len() - 1];
                (t[0] + t[1] * (-gamma * v * v).exp()) * v
            }
            Family::Setar { threshold } => {
                let v = x[x.len() - 1];
                if v <= threshold {
                    t[0] * v
                } else {
                    t[1] * v
                }
            }
        }
    }

    /// Gradient of `r_θ(x)` with respect to `θ`.
    pub fn regression_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.family {
            Family::Ar { order } => (0..order).map(|k| x[order - 1 - k]).collect(),
            Family::Expar { gamma } => {
                let v = x[x.len() - 1];
                vec![v, v * (-gamma * v * v).exp()]
            }
            Family::Setar { threshold } => {
                let v = x[x.len() - 1];
                if v <= threshold {
                    vec![v, 0.0]
                } else {
                    vec![0.0, v]
                }
            }
        }
    }

    /// Regression value at a scalar state, for the order-one families and AR(1).
    #[inline]
    pub(crate) fn regression_scalar(&self, v: f64) -> f64 {
        let t = &self.theta;
        match self.family {
            Family::Ar { .. } => t[0] * v,
            Family::Expar { gamma } => (t[0] + t[1] * (-gamma * v * v).exp()) * v,
            Family::Setar { threshold } => {
                if v <= threshold {
                    t[0] * v
                } else {
                    t[1] * v
                }
            }
        }
    }
}

/// Step-down (Schur–Cohn) test: all reflection coefficients inside (-1, 1).
fn ar_is_stationary(coefficients: &[f64]) -> bool {
    let mut a = coefficients.to_vec();
    for m in (1..=a.len()).rev() {
        let kappa = a[m - 1];
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let denom = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (0..m - 1).map(|k| (a[k] + kappa * a[m - 2 - k]) / denom).collect();
        a = prev;
    }
    true
}

/// Observations `X_{1-p}, …, X_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    order: usize,
}

impl TimeSeries {
    /// `values` holds `X_{1-p}, …, X_n`, so its length is `n + p`.
    pub fn new(values: Vec<f64>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("order must be positive".into()));
        }
        if values.len() <= order {
            return Err(Error::InvalidArgument(format!(
                "series of length {} is too short for order {order}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("series contains non-finite values".into()));
        }
        Ok(Self { values, order })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of usable transitions.
    pub fn n(&self) -> usize {
        self.values.len() - self.order
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Pairs `(X_{i-1}, X_i)` for `i = 1..=n`, the lag vector ordered oldest first.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.values.windows(self.order + 1).map(move |w| (&w[..self.order], w[self.order]))
    }

    /// The most recent `p` values, i.e. the state `X_n`.
    pub fn last_state(&self) -> &[f64] {
        &self.values[self.values.len() - self.order..]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value() / self.values.len() as f64
    }
}

/// Simulates `n + p` observations from the stationary recursion, starting at the
/// zero state and discarding the first `burn_in` values.
pub fn simulate_series(
    spec: &ModelSpec,
    dist: InnovationDist,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(spec, dist, n, burn_in, &mut rng)
}

pub(crate) fn simulate_with_rng(
    spec: &ModelSpec,
    dist: InnovationDist,
    n: usize,
    burn_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TimeSeries> {
    spec.check_stationary()?;
    let p = spec.order();
    if n < p + 2 {
        return Err(Error::InvalidArgument(format!("need n >= p + 2 = {}, got {n}", p + 2)));
    }
    let total = n + p;
    let mut state = vec![0.0; p];
    let mut values = Vec::with_capacity(total);
    for step in 0..burn_in + total {
        let next = spec.regression_value(&state) + dist.sample(rng);
        state.rotate_left(1);
        state[p - 1] = next;
        if step >= burn_in {
            values.push(next);
        }
    }
    TimeSeries::new(values, p)
}

/// Least-squares estimate of `θ`. For AR(1) this is the ratio
/// `Σ X_{i-1} X_i / Σ X_{i-1}²`; the EXPAR family with known decay and the
/// SETAR family with known threshold are linear in `θ`, so their least-squares
/// fits are closed-form as well.
pub fn fit(series: &TimeSeries, family: &Family) -> Result<ModelSpec> {
    let p = family.order();
    if series.order() != p {
        return Err(Error::InvalidArgument(format!(
            "series was recorded with order {}, family needs {p}",
            series.order()
        )));
    }
    let d = family.dim();
    if series.n() < d + 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} transitions to fit {d} parameters",
            d + 2
        )));
    }
    let theta = match family {
        Family::Ar { order: 1 } => {
            let (num, den) = ratio_sums(series.transitions().map(|(x, y)| (x[0], y)));
            vec![checked_ratio(num, den, "sum of squared lagged values is zero")?]
        }
        Family::Ar { order } => {
            let order = *order;
            least_squares(
                series
                    .transitions()
                    .map(|(x, y)| ((0..order).map(|k| x[order - 1 - k]).collect(), y)),
                order,
            )?
        }
        Family::Expar { gamma } => least_squares(
            series.transitions().map(|(x, y)| {
                let v = x[0];
                (vec![v, v * (-gamma * v * v).exp()], y)
            }),
            2,
        )?,
        Family::Setar { threshold } => {
            let lower = ratio_sums(
                series.transitions().filter(|(x, _)| x[0] <= *threshold).map(|(x, y)| (x[0], y)),
            );
            let upper = ratio_sums(
                series.transitions().filter(|(x, _)| x[0] > *threshold).map(|(x, y)| (x[0], y)),
            );
            vec![
                checked_ratio(lower.0, lower.1, "lower regime carries no signal")?,
                checked_ratio(upper.0, upper.1, "upper regime carries no signal")?,
            ]
        }
    };
    ModelSpec::fitted(family.clone(), theta)
}

fn ratio_sums<I: Iterator<Item = (f64, f64)>>(pairs: I) -> (f64, f64) {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (x, y) in pairs {
        num.add(x * y);
        den.add(x * x);
    }
    (num.value(), den.value())
}

fn checked_ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den > 0.0 && den.is_finite() {
        Ok(num / den)
    } else {
        Err(Error::Degenerate(what.to_string()))
    }
}

fn least_squares<I: Iterator<Item = (Vec<f64>, f64)>>(rows: I, d: usize) -> Result<Vec<f64>> {
    let mut gram = vec![CompensatedSum::new(); d * d];
    let mut rhs = vec![CompensatedSum::new(); d];
    for (x, y) in rows {
        for a in 0..d {
            rhs[a].add(x[a] * y);
            for b in 0..d {
                gram[a * d + b].add(x[a] * x[b]);
            }
        }
    }
    let gram = DMatrix::from_fn(d, d, |a, b| gram[a * d + b].value());
    let rhs = DVector::from_fn(d, |a, _| rhs[a].value());
    let scale = (0..d).map(|a| gram[(a, a)]).fold(0.0f64, f64::max);
    let lu = gram.lu();
    let pivot = lu.u().diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if !(scale > 0.0) || !(pivot > 1e-12 * scale) {
        return Err(Error::Degenerate("singular normal equations".into()));
    }
    let solution = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular normal equations".into()))?;
    Ok(solution.iter().copied().collect())
}

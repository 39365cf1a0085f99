use serde::{Deserialize, Serialize};

use super::ResidualSet;
use crate::numeric::CompensatedSum;

const MAX_ITERATIONS: usize = 200;
const POLE_MARGIN: f64 = 1e-12;
const RELATIVE_TOLERANCE: f64 = 1e-12;

/// Empirical-likelihood weights `w_i = 1 / (1 + λ ε_i)`.
///
/// When `solved` is true the weights satisfy `Σ w_i ε_i = 0` and `Σ w_i = n`
/// to working precision. Otherwise `λ = 0` and every weight is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElWeights {
    lambda: f64,
    weights: Vec<f64>,
    solved: bool,
}

impl ElWeights {
    pub fn unit(n: usize) -> Self {
        Self { lambda: 0.0, weights: vec![1.0; n], solved: false }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn solved(&self) -> bool {
        self.solved
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().copied().collect::<CompensatedSum>().value()
    }
}

pub fn solve_el_weights(residuals: &ResidualSet) -> ElWeights {
    solve_el_weights_for(residuals.values())
}

fn constraint(eps: &[f64], lambda: f64) -> (f64, f64) {
    let mut g = CompensatedSum::new();
    let mut dg = CompensatedSum::new();
    for &e in eps {
        let d = 1.0 + lambda * e;
        g.add(e / d);
        dg.add(-(e * e) / (d * d));
    }
    (g.value(), dg.value())
}

fn with_lambda(eps: &[f64], lambda: f64) -> ElWeights {
    ElWeights {
        lambda,
        weights: eps.iter().map(|&e| 1.0 / (1.0 + lambda * e)).collect(),
        solved: true,
    }
}

/// Solves `g(λ) = Σ ε_i / (1 + λ ε_i) = 0` on the interval where all weights
/// stay positive. `g` is strictly decreasing there, so after the sign change
/// at the (slightly shrunk) ends is confirmed, bisection narrows the bracket
/// and safeguarded Newton steps finish the job.
pub fn solve_el_weights_for(eps: &[f64]) -> ElWeights {
    let n = eps.len();
    let scale: f64 = eps.iter().map(|e| e.abs()).collect::<CompensatedSum>().value();
    if n == 0 || scale == 0.0 {
        return ElWeights { lambda: 0.0, weights: vec![1.0; n], solved: n > 0 };
    }
    let tol = RELATIVE_TOLERANCE * scale;
    let (g0, _) = constraint(eps, 0.0);
    if g0.abs() <= tol {
        return with_lambda(eps, 0.0);
    }
    let max = eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eps.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0 && min < 0.0) {
        return ElWeights::unit(n);
    }

    let mut lo = -(1.0 - POLE_MARGIN) / max;
    let mut hi = -(1.0 - POLE_MARGIN) / min;
    let (g_lo, _) = constraint(eps, lo);
    let (g_hi, _) = constraint(eps, hi);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return ElWeights::unit(n);
    }
    // Root sits on the side of zero given by the sign of g(0).
    if g0 > 0.0 {
        lo = 0.0;
    } else {
        hi = 0.0;
    }

    let mut lambda = 0.5 * (lo + hi);
    for iteration in 0..MAX_ITERATIONS {
        let (g, dg) = constraint(eps, lambda);
        if g.abs() <= tol {
            return with_lambda(eps, lambda);
        }
        if g > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // A few plain bisection steps first: Newton is unreliable near the poles.
        let newton = lambda - g / dg;
        lambda = if iteration >= 8 && newton > lo && newton < hi && dg < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    let (g, _) = constraint(eps, lambda);
    if g.abs() <= tol {
        with_lambda(eps, lambda)
    } else {
        ElWeights::unit(n)
    }
}

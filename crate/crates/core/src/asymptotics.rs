//! Asymptotic variances of the unweighted and weighted estimators of the
//! AR(1) conditional distribution functions at lags one and two.
//!
//! Innovations are standardised, so `σ² = 1` throughout and the least squares
//! estimator of `θ` has asymptotic variance `1 - θ²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovation::InnovationDist;

const QUAD_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub tau_sq: f64,
    pub tau_w_sq: f64,
    pub ratio: f64,
    /// Variance of the influence term from the innovations.
    pub var_h: f64,
    /// Contribution of the parameter estimate.
    pub psi_term: f64,
    /// Variance removed by weighting, `c²`.
    pub c_term: f64,
}

impl AsymptoticReport {
    fn assemble(var_h: f64, psi_term: f64, c: f64) -> Self {
        let tau_sq = var_h + psi_term;
        let c_term = c * c;
        let tau_w_sq = tau_sq - c_term;
        let ratio = if tau_sq > 0.0 { tau_w_sq / tau_sq } else { 0.0 };
        Self { tau_sq, tau_w_sq, ratio, var_h, psi_term, c_term }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::NonStationary(format!("AR(1) coefficient {theta} is outside (-1, 1)")))
    }
}

/// Lag one, `P(X_{n+1} <= t | X_n = x)`:
/// `τ² = F(a)(1 - F(a)) + x² f(a)² (1 - θ²)` and `τ_w² = τ² - c²` with
/// `a = t - θx` and `c = ∫_{-∞}^a y f(y) dy`.
pub fn lag1_cdf_variances(theta: f64, x: f64, t: f64, dist: InnovationDist) -> Result<AsymptoticReport> {
    check_theta(theta)?;
    let a = t - theta * x;
    let fa = dist.cdf(a);
    let da = dist.pdf(a);
    let var_h = fa * (1.0 - fa);
    let psi_term = x * x * da * da * (1.0 - theta * theta);
    Ok(AsymptoticReport::assemble(var_h, psi_term, dist.partial_first_moment(a)))
}

/// Influence function of the innovations for the lag-two marginal
/// distribution function `G_x(u)`.
pub fn lag2_influence(theta: f64, x: f64, u: f64, dist: InnovationDist, e: f64) -> f64 {
    let shift = u - theta * theta * x;
    let first = dist.cdf(shift - theta * e);
    if theta > 0.0 {
        first + dist.cdf((shift - e) / theta)
    } else if theta == 0.0 {
        dist.cdf(u) + if e <= u { 1.0 } else { 0.0 }
    } else {
        first + 1.0 - dist.cdf((shift - e) / theta)
    }
}

/// Lag two, `P(X_{n+2} <= u | X_n = x)`:
/// `τ² = Var h_u(ε) + Ψ_u² (1 - θ²)`, `τ_w² = τ² - (E ε h_u(ε))²` with
/// `Ψ_u = -E[(ε + 2θx) f(u - θε - θ²x)]`.
pub fn lag2_cdf_variances(theta: f64, x: f64, u: f64, dist: InnovationDist) -> Result<AsymptoticReport> {
    check_theta(theta)?;
    let shift = u - theta * theta * x;
    // The second term of h_u switches over a width |θ| around ε = shift.
    let w = theta.abs();
    let kinks = [shift, shift - w, shift + w, shift - 4.0 * w, shift + 4.0 * w, u];
    let h = |e: f64| lag2_influence(theta, x, u, dist, e);
    let m1 = dist.expect(h, &kinks, QUAD_TOL);
    let m2 = dist.expect(|e| h(e) * h(e), &kinks, QUAD_TOL);
    let c = dist.expect(|e| e * h(e), &kinks, QUAD_TOL);
    let psi = if theta == 0.0 {
        0.0
    } else {
        let centre = shift / theta;
        -dist.expect(
            |e| (e + 2.0 * theta * x) * dist.pdf(shift - theta * e),
            &[centre, centre - 4.0 / w, centre + 4.0 / w],
            QUAD_TOL,
        )
    };
    let var_h = (m2 - m1 * m1).max(0.0);
    Ok(AsymptoticReport::assemble(var_h, psi * psi * (1.0 - theta * theta), c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub theta: f64,
    pub x: f64,
    pub tau_sq: f64,
    pub tau_w_sq: f64,
    pub ratio: f64,
}

/// Evenly spaced grid with `count` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

pub fn default_theta_grid() -> Vec<f64> {
    linspace(0.05, 0.95, 19)
}

pub fn default_x_grid() -> Vec<f64> {
    linspace(0.0, 2.0, 21)
}

/// Relative efficiency of the weighted lag-two estimator over a `θ × x` grid,
/// row-major in `θ`.
pub fn efficiency_surface(u: f64, dist: InnovationDist, thetas: &[f64], xs: &[f64]) -> Result<Vec<SurfacePoint>> {
    for &t in thetas {
        check_theta(t)?;
    }
    let cells: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| xs.iter().map(move |&x| (t, x))).collect();
    cells
        .par_iter()
        .map(|&(theta, x)| {
            let r = lag2_cdf_variances(theta, x, u, dist)?;
            Ok(SurfacePoint { theta, x, tau_sq: r.tau_sq, tau_w_sq: r.tau_w_sq, ratio: r.ratio })
        })
        .collect()
}

pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut out = String::from("theta,x,tau_sq,tau_w_sq,ratio\n");
    for p in points {
        out.push_str(&format!("{},{},{},{},{}\n", p.theta, p.x, p.tau_sq, p.tau_w_sq, p.ratio));
    }
    out
}

//! Innovation distributions, all standardised to mean zero and variance one.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numeric::{integrate_real_line, left_inverse};

/// Scale of the logistic law with unit variance (`π² s² / 3 = 1`).
pub const LOGISTIC_SCALE: f64 = 0.551_328_895_421_792_1;
/// Scale applied to a t(5) variate to get unit variance (`Var t(5) = 5/3`).
pub const T5_SCALE: f64 = 0.774_596_669_241_483_4;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InnovationDist {
    #[serde(rename = "normal")]
    StdNormal,
    #[serde(rename = "logistic")]
    LogisticUnitVar,
    #[serde(rename = "t5")]
    T5UnitVar,
}

impl InnovationDist {
    pub const ALL: [InnovationDist; 3] = [
        InnovationDist::StdNormal,
        InnovationDist::LogisticUnitVar,
        InnovationDist::T5UnitVar,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InnovationDist::StdNormal => "normal",
            InnovationDist::LogisticUnitVar => "logistic",
            InnovationDist::T5UnitVar => "t5",
        }
    }

    /// Label used in the simulation tables.
    pub fn label(&self) -> &'static str {
        match self {
            InnovationDist::StdNormal => "Normal",
            InnovationDist::LogisticUnitVar => "Logistic",
            InnovationDist::T5UnitVar => "t(5)",
        }
    }

    pub fn variance(&self) -> f64 {
        1.0
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match self {
            InnovationDist::StdNormal => INV_SQRT_2PI * (-0.5 * y * y).exp(),
            InnovationDist::LogisticUnitVar => {
                let s = LOGISTIC_SCALE;
                let e = (-y.abs() / s).exp();
                e / (s * (1.0 + e) * (1.0 + e))
            }
            InnovationDist::T5UnitVar => {
                let v = 1.0 + y * y / 3.0;
                8.0 / (3.0 * 3f64.sqrt() * PI) / (v * v * v)
            }
        }
    }

    /// Derivative of the density.
    pub fn pdf_derivative(&self, y: f64) -> f64 {
        -self.score(y) * self.pdf(y)
    }

    /// Location score `-f'/f`.
    pub fn score(&self, y: f64) -> f64 {
        match self {
            InnovationDist::StdNormal => y,
            InnovationDist::LogisticUnitVar => {
                let s = LOGISTIC_SCALE;
                (y / (2.0 * s)).tanh() / s
            }
            InnovationDist::T5UnitVar => 6.0 * y / (3.0 + y * y),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            InnovationDist::StdNormal => 0.5 * erfc(-y / SQRT_2),
            InnovationDist::LogisticUnitVar => {
                let z = y / LOGISTIC_SCALE;
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            InnovationDist::T5UnitVar => {
                // t(5) in closed form with θ = atan(t/√5) and t = y/T5_SCALE.
                if y.is_infinite() {
                    return if y > 0.0 { 1.0 } else { 0.0 };
                }
                let theta = (y / 3f64.sqrt()).atan();
                let (s, c) = theta.sin_cos();
                let value =
                    0.5 + (theta + s * c * (1.0 + 2.0 / 3.0 * c * c)) / PI;
                value.clamp(0.0, 1.0)
            }
        }
    }

    /// `∫_{-∞}^{a} y f(y) dy`, which is `-φ(a)` for the normal law.
    pub fn partial_first_moment(&self, a: f64) -> f64 {
        match self {
            InnovationDist::StdNormal => -self.pdf(a),
            _ => {
                if a == f64::INFINITY {
                    return 0.0;
                }
                let f = |y: f64| if y <= a { y * self.pdf(y) } else { 0.0 };
                let mut breaks = vec![a];
                if a > 0.0 {
                    breaks.push(0.0);
                }
                integrate_real_line(f, &breaks, 1e-13)
            }
        }
    }

    /// Expectation `E[g(ε)]` by adaptive quadrature over the real line,
    /// splitting at the given kink points.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G, kinks: &[f64], abs_tol: f64) -> f64 {
        let mut breaks = vec![-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0];
        breaks.extend(kinks.iter().copied().filter(|k| k.is_finite()));
        integrate_real_line(|y| g(y) * self.pdf(y), &breaks, abs_tol)
    }

    /// Left-inverse of the distribution function.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "probability must lie in (0, 1), got {prob}"
            )));
        }
        let mut lo = -1.0;
        while self.cdf(lo) >= prob {
            lo *= 2.0;
        }
        let mut hi = 1.0;
        while self.cdf(hi) < prob {
            hi *= 2.0;
        }
        Ok(left_inverse(|t| self.cdf(t), prob, lo, hi, 1e-14))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InnovationDist::StdNormal => rng.sample(StandardNormal),
            InnovationDist::LogisticUnitVar => {
                let u: f64 = rng.sample(Open01);
                LOGISTIC_SCALE * (u / (1.0 - u)).ln()
            }
            InnovationDist::T5UnitVar => {
                let z: f64 = rng.sample(StandardNormal);
                let chi = ChiSquared::new(5.0).expect("valid degrees of freedom");
                let v: f64 = chi.sample(rng);
                T5_SCALE * z / (v / 5.0).sqrt()
            }
        }
    }
}

impl fmt::Display for InnovationDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InnovationDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" | "stdnormal" => Ok(InnovationDist::StdNormal),
            "logistic" => Ok(InnovationDist::LogisticUnitVar),
            "t5" | "t(5)" | "student5" => Ok(InnovationDist::T5UnitVar),
            other => Err(Error::InvalidArgument(format!("unknown innovation law `{other}`"))),
        }
    }
}

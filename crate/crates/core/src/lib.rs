//! Residual-based prediction for parametric autoregressive time series.
//!
//! Conditional expectations `E(q(X_{n+1}, X_{n+2}) | X_n = x)` of a stationary
//! autoregression `X_i = r_θ(X_{i-1}) + ε_i` are estimated by plugging residuals
//! into von Mises statistics. Four variants are provided:
//!
//! * `U`  plain von Mises statistic over the residual empirical distribution,
//! * `W`  the same with empirical-likelihood weights `w_i = 1/(1 + λ ε_i)`
//!   chosen so that the weighted residual mean is exactly zero,
//! * `S`  smoothed: the residual distribution is replaced by a kernel density,
//! * `SW` smoothed and weighted.
//!
//! The crate also carries closed-form asymptotic variances for the AR(1)
//! conditional distribution functions of lags one and two, and a seeded Monte
//! Carlo harness for mean squared error studies.
//!
//! ```
//! use arpredict::prelude::*;
//!
//! let spec = ModelSpec::ar1(0.5).unwrap();
//! let series = simulate_series(&spec, InnovationDist::StdNormal, 500, 500, 7).unwrap();
//! let fitted = fit(&series, &spec.family()).unwrap();
//! let residuals = ResidualSet::new(&series, &fitted).unwrap();
//! let weights = solve_el_weights(&residuals);
//! let predictor = Predictor::new(&fitted, &residuals, &weights, KernelConfig::default());
//! let p = predictor.conditional_cdf(&[0.5], &Target::Cdf2Marginal(0.0), Variant::SW).unwrap();
//! assert!(p > 0.3 && p < 0.6);
//! ```

pub mod asymptotics;
pub mod error;
pub mod innovation;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod predict;
pub mod weights_kde;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::asymptotics::{
        efficiency_surface, lag1_cdf_variances, lag2_cdf_variances, AsymptoticReport,
        SurfacePoint,
    };
    pub use crate::error::{Error, Result};
    pub use crate::innovation::InnovationDist;
    pub use crate::model::{fit, simulate_series, Family, ModelSpec, TimeSeries};
    pub use crate::montecarlo::{run, table1, true_value, MCConfig, MCResult};
    pub use crate::predict::{
        Lag2Quadrature, PredictionResult, PredictionTask, Predictor, Target, Variant,
    };
    pub use crate::weights_kde::{
        kde, smoothed_cdf, solve_el_weights, Bandwidth, ElWeights, Kernel, KernelConfig,
        ResidualSet,
    };
}

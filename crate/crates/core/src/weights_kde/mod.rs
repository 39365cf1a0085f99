//! Residuals, empirical-likelihood weights and the kernel-smoothed residual
//! density and distribution function built from them.

mod kernel;
mod residuals;
mod weights;

pub use kernel::{kde, smoothed_cdf, Bandwidth, Kernel, KernelConfig, ResidualCdf};
pub use residuals::ResidualSet;
pub use weights::{solve_el_weights, solve_el_weights_for, ElWeights};

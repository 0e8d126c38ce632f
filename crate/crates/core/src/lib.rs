//! Random spanning forest estimators for graph Tikhonov regularization.
//!
//! A forest sampled by an absorbed loop-erased random walk yields unbiased
//! Monte Carlo estimates of `(L+Q)⁻¹Q y`. The crate builds smoothing,
//! interpolation, hyperparameter tuning, label propagation, Newton and IRLS
//! solvers on top of that sampler, and ships exact dense oracles and
//! iterative baselines (CG, Chebyshev) for comparison.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod forest;
pub mod graph;
pub mod smoother;
pub mod tasks;
pub mod tuning;

pub use error::{Error, Result};
pub use forest::{DiagQ, Forest, ForestEnsemble};
pub use graph::{Graph, Signal};
pub use smoother::{DenseOracle, Estimator, SmoothEstimate};

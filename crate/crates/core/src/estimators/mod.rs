//! Optimizers and the four estimators: subset MLE, full-data MLE,
//! finite-parameter-space MLE and data cloning.

mod cloning;
mod fit;
mod optimize;

pub use cloning::{effective_sample_size, fit_dc_mle, ChainSummary, CloneConfig, DcResult, ACCEPTANCE_RANGE};
pub use fit::{fit_finite_mle, fit_full_mle, fit_subset_mle, FitMethod, FitOptions, FitResult};
pub use optimize::{optimize_scalar, optimize_simplex, ScalarOptimum, SimplexOptimum};

//! Maximum likelihood for binary-response mixed models with two crossed
//! random-effect factors.
//!
//! The crate evaluates the marginal likelihood exactly (structured
//! Gauss–Hermite quadrature) or by Monte Carlo (prior sampling or a
//! Laplace-centred importance sampler), fits the full-data MLE, the
//! subset MLEs built from independent pieces of the table, a finite
//! parameter-space MLE and a data-cloning MLE, and checks the subset
//! inequality and the information-loss identity by exhaustive enumeration
//! of tiny designs. The `harness` module runs seeded consistency studies.
//!
//! See the runnable programs under `examples/` for one tour per capability.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod identify;
pub mod information;
pub mod likelihood;
pub mod model;
pub mod quadrature;

pub use error::{Error, Result};
pub use model::{CrossedDesign, FreeMask, RandomEffects, ResponseTable, SubsetKind, SubsetSpec, Theta};

//! Marginal log-likelihoods of the full table and of the independent subsets.

mod gradient;
mod importance;
mod marginal;
mod subset;

pub use gradient::{loglik_gradient_fd, DEFAULT_STEP};
pub(crate) use gradient::{chain_factor, check_interior, nudge};
pub use importance::{marginal_loglik_is, PROPOSAL_INFLATION};
pub use marginal::{exact_tensor_points, marginal_loglik_exact, marginal_loglik_mc};
pub use subset::{
    m_function, offdiag_masses, offdiag_pair_loglik, p0, p_gamma_11, pair_masses, subset_diag_loglik,
    subset_pair_loglik,
};

use crate::error::Result;
use crate::model::{ResponseTable, Theta};
use crate::quadrature::DEFAULT_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExactQuadrature,
    MonteCarlo,
}

/// A log-likelihood with how it was obtained. `mc_std_error` is present
/// exactly when `method` is [`Method::MonteCarlo`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodValue {
    pub loglik: f64,
    pub method: Method,
    pub mc_std_error: Option<f64>,
    pub evaluations: usize,
}

/// How an estimator evaluates the full-data likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LikelihoodMethod {
    Exact { order: usize },
    MonteCarlo { draws: usize, seed: u64, order: usize },
    /// Monte-Carlo with a Laplace-centred proposal over the outer effects.
    ImportanceSampling { draws: usize, seed: u64, order: usize },
}

impl Default for LikelihoodMethod {
    fn default() -> Self {
        LikelihoodMethod::Exact { order: DEFAULT_ORDER }
    }
}

impl LikelihoodMethod {
    pub fn evaluate(&self, data: &ResponseTable, theta: &Theta) -> Result<LikelihoodValue> {
        match *self {
            LikelihoodMethod::Exact { order } => marginal_loglik_exact(data, theta, order),
            LikelihoodMethod::MonteCarlo { draws, seed, order } => {
                marginal_loglik_mc(data, theta, draws, seed, order)
            }
            LikelihoodMethod::ImportanceSampling { draws, seed, order } => {
                marginal_loglik_is(data, theta, draws, seed, order)
            }
        }
    }

    pub fn order(&self) -> usize {
        match *self {
            LikelihoodMethod::Exact { order }
            | LikelihoodMethod::MonteCarlo { order, .. }
            | LikelihoodMethod::ImportanceSampling { order, .. } => order,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LikelihoodMethod::Exact { .. } => "quadrature",
            LikelihoodMethod::MonteCarlo { .. } => "mc",
            LikelihoodMethod::ImportanceSampling { .. } => "is",
        }
    }
}

use super::marginal_loglik_exact;
use crate::error::{Error, Result};
use crate::model::{ResponseTable, Theta, MU_BOUNDS, VAR_BOUNDS};

/// Default central-difference step (on the log scale for variances).
pub const DEFAULT_STEP: f64 = 1e-4;

/// Perturbs free component `index` of `theta` by `delta` on the working
/// scale (additive for μ, multiplicative for the variances).
pub(crate) fn nudge(theta: &Theta, index: usize, delta: f64) -> Theta {
    let mut out = *theta;
    let v = theta.values()[index];
    out.set(index, if index == 0 { v + delta } else { v * delta.exp() });
    out
}

/// d(working)/d(natural) for component `index`.
pub(crate) fn chain_factor(theta: &Theta, index: usize) -> f64 {
    if index == 0 {
        1.0
    } else {
        1.0 / theta.values()[index]
    }
}

/// Checks that `theta ± step` stays inside the parameter box on the
/// working scale for every free component.
pub(crate) fn check_interior(theta: &Theta, step: f64) -> Result<()> {
    for i in theta.free_indices() {
        let v = theta.values()[i];
        let ok = if i == 0 {
            v - step >= MU_BOUNDS.0 && v + step <= MU_BOUNDS.1
        } else {
            v > 0.0 && v.ln() - step >= VAR_BOUNDS.0.ln() && v.ln() + step <= VAR_BOUNDS.1.ln()
        };
        if !ok {
            return Err(Error::Boundary(format!("component {i} = {v} within {step} of the box edge")));
        }
    }
    Ok(())
}

/// Central-difference gradient of `f` with respect to the free components
/// of `theta`, on the natural scale.
pub(crate) fn fd_gradient(
    theta: &Theta,
    step: f64,
    mut f: impl FnMut(&Theta) -> Result<f64>,
) -> Result<Vec<f64>> {
    check_interior(theta, step)?;
    theta
        .free_indices()
        .into_iter()
        .map(|i| {
            let up = f(&nudge(theta, i, step))?;
            let down = f(&nudge(theta, i, -step))?;
            Ok((up - down) / (2.0 * step) * chain_factor(theta, i))
        })
        .collect()
}

/// Gradient of the exact marginal log-likelihood over the free parameters.
pub fn loglik_gradient_fd(data: &ResponseTable, theta: &Theta, step: f64, order: usize) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    fd_gradient(theta, step, |th| Ok(marginal_loglik_exact(data, th, order)?.loglik))
}

//! Subset and full-data maximum likelihood on one simulated table, in the
//! mean-only mode and with all three parameters free.

use crossed_glmm::estimators::{fit_full_mle, fit_subset_mle, FitOptions};
use crossed_glmm::harness::{simulate, DesignRule};
use crossed_glmm::likelihood::LikelihoodMethod;
use crossed_glmm::Theta;

fn main() -> crossed_glmm::Result<()> {
    let truth = Theta::mu_only(0.5, 1.0, 1.0)?;
    let data = simulate(DesignRule::FullCrossing, 5, 5, &truth, 3)?;
    let subset = fit_subset_mle(&data, &truth, 30)?;
    println!("subset MLE of mu from the diagonal: {:.4}", subset.theta_hat.mu);

    // 5x5 is above the exact tensor cap at order 30; use order 20 instead.
    let exact = fit_full_mle(&data, &truth, &LikelihoodMethod::Exact { order: 20 }, &FitOptions::default())?;
    println!("full MLE (quadrature, order 20):    {:.4}  loglik {:.4}", exact.theta_hat.mu, exact.loglik);
    let mc = LikelihoodMethod::MonteCarlo { draws: 2000, seed: 1, order: 20 };
    let mc_fit = fit_full_mle(&data, &truth, &mc, &FitOptions::default())?;
    println!("full MLE (Monte-Carlo):             {:.4}", mc_fit.theta_hat.mu);

    // Three-parameter mode on a design with replicate pairs on the diagonal.
    let all = Theta::new(0.2, 1.0, 1.0)?;
    let big = simulate(DesignRule::SalamanderStyle, 40, 40, &all, 9)?;
    let two_stage = fit_subset_mle(&big, &all, 30)?;
    println!("two-stage subset MLE on 40x40: {}", two_stage.theta_hat);
    Ok(())
}

//! Data cloning: the posterior mean approaches the MLE and K times the
//! posterior variance approaches the inverse Fisher information as the
//! number of clones K grows.

use crossed_glmm::estimators::{fit_dc_mle, fit_full_mle, CloneConfig, FitOptions};
use crossed_glmm::harness::{simulate, DesignRule};
use crossed_glmm::information::fisher_info;
use crossed_glmm::likelihood::LikelihoodMethod;
use crossed_glmm::Theta;

fn main() -> crossed_glmm::Result<()> {
    let order = 12;
    let template = Theta::mu_only(0.0, 1.0, 1.0)?;
    let data = simulate(DesignRule::FullCrossing, 4, 4, &template, 11)?;
    let mle = fit_full_mle(&data, &template, &LikelihoodMethod::Exact { order }, &FitOptions::default())?;
    let info = fisher_info(data.design(), &mle.theta_hat, None, order)?[(0, 0)];
    println!("MLE {:.4}, inverse information {:.4}", mle.theta_hat.mu, 1.0 / info);
    for k in [1, 4, 16, 64] {
        let mut cfg = CloneConfig::new(k, 2000, 5);
        cfg.order = order;
        let r = fit_dc_mle(&data, &template, &cfg)?;
        println!(
            "K={k:>2}: posterior mean {:.4}, K*var {:.4}, acceptance {:.2}",
            r.posterior_mean.mu,
            r.scaled_cov[(0, 0)],
            r.acceptance_rate
        );
    }
    Ok(())
}

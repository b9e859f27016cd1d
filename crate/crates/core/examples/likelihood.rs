//! Simulate a crossed table and evaluate its marginal log-likelihood three
//! ways: structured quadrature, prior-sampling Monte-Carlo and Laplace-centred
//! importance sampling.

use crossed_glmm::harness::{simulate, DesignRule};
use crossed_glmm::likelihood::{marginal_loglik_exact, marginal_loglik_is, marginal_loglik_mc, p0};
use crossed_glmm::Theta;

fn main() -> crossed_glmm::Result<()> {
    let theta = Theta::new(0.3, 1.0, 0.8)?;
    let data = simulate(DesignRule::FullCrossing, 4, 6, &theta, 42)?;
    println!("simulated 4x6 table, mean response {:.3}", data.mean());

    let exact = marginal_loglik_exact(&data, &theta, 30)?;
    println!("quadrature          {:.6}  ({} outer nodes)", exact.loglik, exact.evaluations);
    for draws in [1_000, 10_000] {
        let mc = marginal_loglik_mc(&data, &theta, draws, 7, 30)?;
        let is = marginal_loglik_is(&data, &theta, draws, 7, 30)?;
        println!(
            "{draws:>6} draws  mc {:.6} (se {:.1e})   is {:.6} (se {:.1e})",
            mc.loglik,
            mc.mc_std_error.unwrap(),
            is.loglik,
            is.mc_std_error.unwrap()
        );
    }
    println!("single-response success probability p0(0.3, 1.8) = {:.6}", p0(0.3, theta.psi2(), 30)?);
    Ok(())
}

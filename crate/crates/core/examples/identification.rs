//! Identifiability checks for the two pair subsets: Kullback-Leibler
//! separation on a grid, injectivity of the moment map and monotonicity
//! of the joint success probability in the variance share.

use crossed_glmm::identify::{check_b2_grid, check_m_injective, check_slepian_monotone};
use crossed_glmm::Theta;

fn main() -> crossed_glmm::Result<()> {
    let theta0 = Theta::new(0.2, 1.0, 0.8)?;
    let grid = check_b2_grid(&theta0, 0.2, 3.0, 7, 30)?;
    println!(
        "{} grid points, weakest separation {:.3e} at {} (passed: {})",
        grid.points.len(),
        grid.delta,
        grid.worst.theta,
        grid.passed
    );
    let inj = check_m_injective((-2.0, 2.0), (0.25, 4.0), 15, 30)?;
    println!("moment map: minimum separation ratio {:.3e}", inj.min_ratio);
    let gammas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let s = check_slepian_monotone(0.0, 2.0, &gammas, 30)?;
    for (g, p) in &s.values {
        println!("gamma {g:.1}  P(1,1) {p:.6}");
    }
    Ok(())
}

//! Full-data marginal likelihood by importance sampling over the outer
//! effects, with the same one-dimensional rule per column as the other
//! paths.
//!
//! Sampling the row effects from their prior wastes most draws once a
//! component has more than a handful of rows: the integrand concentrates
//! where the rows' data put it. Here the proposal is a normal centred at
//! the mode of the integrand (in standardized coordinates) with covariance
//! equal to the inverse negative Hessian there, widened by
//! [`PROPOSAL_INFLATION`] so its tails dominate.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::marginal::{blocks, log_sum_exp, rule_for, Block};
use super::{LikelihoodValue, Method};
use crate::error::{Error, Result};
use crate::model::{log1m_logistic, log_logistic, logistic, ResponseTable, Theta};
use crate::quadrature::{rule, QuadratureRule};

/// Scale factor on the Laplace proposal's standard deviations.
pub const PROPOSAL_INFLATION: f64 = 1.2;

const NEWTON_MAX_ITER: usize = 60;
const NEWTON_TOL: f64 = 1e-9;

/// Log of the column factor at standardized outer effects `z`, optionally
/// with its gradient and Hessian in `z`.
struct ColumnTerm<'a> {
    block: &'a Block,
    mu: f64,
    so: f64,
    si: f64,
    inner: &'a QuadratureRule,
    log_wi: Vec<f64>,
}

impl ColumnTerm<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let qi = self.inner.order();
        let mut buf = vec![0.0; qi];
        let mut sum = 0.0;
        for col in &self.block.cols {
            buf.copy_from_slice(&self.log_wi);
            for e in col {
                let base = self.mu + self.so * z[e.row];
                for (t, b) in buf.iter_mut().enumerate() {
                    let eta = base + self.si * self.inner.nodes[t];
                    *b += e.succ as f64 * log_logistic(eta) + e.fail as f64 * log1m_logistic(eta);
                }
            }
            sum += log_sum_exp(&buf);
        }
        sum
    }

    /// Value, gradient and Hessian. Per column the derivatives are moments
    /// of the per-row scores under the column effect's posterior on the
    /// inner nodes.
    fn derivatives(&self, z: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.block.rows;
        let qi = self.inner.order();
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let mut buf = vec![0.0; qi];
        let mut sum = 0.0;
        for col in &self.block.cols {
            let k = col.len();
            // score[e][t] = s - c h, curv[e][t] = c h (1 - h)
            let mut score = vec![0.0; k * qi];
            let mut curv = vec![0.0; k * qi];
            buf.copy_from_slice(&self.log_wi);
            for (a, e) in col.iter().enumerate() {
                let base = self.mu + self.so * z[e.row];
                let c = (e.succ + e.fail) as f64;
                for (t, b) in buf.iter_mut().enumerate() {
                    let eta = base + self.si * self.inner.nodes[t];
                    *b += e.succ as f64 * log_logistic(eta) + e.fail as f64 * log1m_logistic(eta);
                    let h = logistic(eta);
                    score[a * qi + t] = e.succ as f64 - c * h;
                    curv[a * qi + t] = c * h * (1.0 - h);
                }
            }
            let lse = log_sum_exp(&buf);
            sum += lse;
            let post: Vec<f64> = buf.iter().map(|b| (b - lse).exp()).collect();
            let mean = |xs: &[f64]| xs.iter().zip(&post).map(|(x, p)| x * p).sum::<f64>();
            let means: Vec<f64> = (0..k).map(|a| mean(&score[a * qi..(a + 1) * qi])).collect();
            let s2 = self.so * self.so;
            for (a, ea) in col.iter().enumerate() {
                grad[ea.row] += self.so * means[a];
                hess[(ea.row, ea.row)] -= s2 * mean(&curv[a * qi..(a + 1) * qi]);
                for (b, eb) in col.iter().enumerate() {
                    let cross: f64 = (0..qi).map(|t| post[t] * score[a * qi + t] * score[b * qi + t]).sum();
                    hess[(ea.row, eb.row)] += s2 * (cross - means[a] * means[b]);
                }
            }
        }
        (sum, grad, hess)
    }
}

/// Objective in `z`: column term plus the standard normal log kernel.
fn log_target(term: &ColumnTerm, z: &[f64]) -> f64 {
    term.value(z) - 0.5 * z.iter().map(|x| x * x).sum::<f64>()
}

/// Cholesky factor of the negative Hessian, ridged until it exists.
fn negative_hessian_factor(hess: &DMatrix<f64>) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
    let d = hess.nrows();
    let mut ridge = 0.0;
    loop {
        let neg = -hess + DMatrix::identity(d, d) * (1.0 + ridge);
        if let Some(ch) = neg.cholesky() {
            return ch;
        }
        ridge = if ridge == 0.0 { 1e-6 } else { ridge * 10.0 };
    }
}

/// Damped Newton ascent from the prior mode.
fn find_mode(term: &ColumnTerm) -> (DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>) {
    let d = term.block.rows;
    let mut z = DVector::zeros(d);
    let mut current = log_target(term, z.as_slice());
    for _ in 0..NEWTON_MAX_ITER {
        let (_, g, h) = term.derivatives(z.as_slice());
        let grad = g - &z;
        let step = negative_hessian_factor(&h).solve(&grad);
        let mut scale = 1.0;
        let mut moved = false;
        while scale > 1e-6 {
            let trial = &z + &step * scale;
            let value = log_target(term, trial.as_slice());
            if value >= current {
                z = trial;
                current = value;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved || step.amax() * scale < NEWTON_TOL {
            break;
        }
    }
    let (_, _, h) = term.derivatives(z.as_slice());
    (z, negative_hessian_factor(&h))
}

/// Log marginal probability by importance sampling over the outer effects
/// with a Laplace-centred normal proposal. The standard normal draws depend
/// only on `seed`, so evaluations at nearby θ share random numbers.
pub fn marginal_loglik_is(
    data: &ResponseTable,
    theta: &Theta,
    draws: usize,
    seed: u64,
    order: usize,
) -> Result<LikelihoodValue> {
    if draws < 100 {
        return Err(Error::InvalidParameter(format!("Monte-Carlo needs at least 100 draws, got {draws}")));
    }
    rule(order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut var_total = 0.0;
    let mut values = vec![0.0; draws];
    for b in blocks(data, theta) {
        let inner = rule_for(b.inner_var, order)?;
        let term = ColumnTerm {
            block: &b,
            mu: theta.mu,
            so: b.outer_var.sqrt(),
            si: b.inner_var.sqrt(),
            log_wi: inner.weights.iter().map(|w| w.ln()).collect(),
            inner: &inner,
        };
        if b.outer_var == 0.0 {
            total += term.value(&vec![0.0; b.rows]);
            continue;
        }
        let d = b.rows;
        let (mode, chol) = find_mode(&term);
        let upper = chol.l().transpose();
        let log_det_l: f64 = chol.l().diagonal().iter().map(|x| x.ln()).sum();
        let log_jacobian = d as f64 * PROPOSAL_INFLATION.ln() - log_det_l;
        for value in values.iter_mut() {
            let eps = DVector::from_iterator(d, (0..d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            let offset = upper.solve_upper_triangular(&eps).expect("Cholesky factor is nonsingular");
            let z = &mode + offset * PROPOSAL_INFLATION;
            // log [target / proposal]; the 2π terms cancel.
            *value = log_target(&term, z.as_slice()) + 0.5 * eps.norm_squared() + log_jacobian;
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
        let mean = scaled.iter().sum::<f64>() / draws as f64;
        let var = scaled.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        total += max + mean.ln();
        var_total += var / draws as f64 / (mean * mean);
    }
    Ok(LikelihoodValue {
        loglik: total,
        method: Method::MonteCarlo,
        mc_std_error: Some(var_total.sqrt()),
        evaluations: draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::marginal_loglik_exact;
    use crate::model::CrossedDesign;

    #[test]
    fn hessian_matches_finite_differences() {
        let d = CrossedDesign::full_crossing(3, 4, 2).unwrap();
        let data = ResponseTable::new(d, vec![1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 1, 1, 0, 1, 1]).unwrap();
        let th = Theta::new(0.3, 1.5, 0.7).unwrap();
        let b = &blocks(&data, &th)[0];
        let inner = rule_for(b.inner_var, 20).unwrap();
        let term = ColumnTerm {
            block: b,
            mu: th.mu,
            so: b.outer_var.sqrt(),
            si: b.inner_var.sqrt(),
            log_wi: inner.weights.iter().map(|w| w.ln()).collect(),
            inner: &inner,
        };
        let z = [0.2, -0.4, 0.9];
        let (v, g, h) = term.derivatives(&z);
        assert!((v - term.value(&z)).abs() < 1e-12);
        let step = 1e-5;
        for i in 0..3 {
            let shifted = |s: f64| {
                let mut w = z;
                w[i] += s;
                term.derivatives(&w)
            };
            let (vp, gp, _) = shifted(step);
            let (vm, gm, _) = shifted(-step);
            assert!(((vp - vm) / (2.0 * step) - g[i]).abs() < 1e-7);
            for k in 0..3 {
                assert!(((gp[k] - gm[k]) / (2.0 * step) - h[(k, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn agrees_with_exact_on_a_four_row_block() {
        let d = CrossedDesign::full_crossing(4, 5, 1).unwrap();
        let y = vec![1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1, 1, 0, 1, 0, 1, 0, 0, 1];
        let data = ResponseTable::new(d, y).unwrap();
        let th = Theta::new(0.2, 1.0, 1.0).unwrap();
        let exact = marginal_loglik_exact(&data, &th, 20).unwrap().loglik;
        let is = marginal_loglik_is(&data, &th, 4000, 9, 20).unwrap();
        let se = is.mc_std_error.unwrap();
        assert!(se < 0.01, "se {se}");
        assert!((is.loglik - exact).abs() < 4.0 * se + 1e-9, "{} vs {exact}", is.loglik);
    }
}

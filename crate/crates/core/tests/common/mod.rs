//! Independent reference computations for the integration tests. Nothing
//! here calls into the likelihood or information code it is used to check.
#![allow(dead_code)]

use crossed_glmm::model::{logistic, CrossedDesign, ResponseTable};
use crossed_glmm::quadrature::gauss_hermite;

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // Split into panels so narrow features are not skipped.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            recurse(f, lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi), tol / panels as f64, 40)
        })
        .sum()
}

pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// E g(mean + sd Z) by adaptive Simpson over mean ± 12 sd.
pub fn normal_expectation(g: &dyn Fn(f64) -> f64, mean: f64, var: f64, tol: f64) -> f64 {
    let sd = var.sqrt();
    adaptive_simpson(&|x| g(x) * normal_pdf(x - mean, var), mean - 12.0 * sd, mean + 12.0 * sd, tol)
}

pub fn p0_oracle(lambda: f64, psi2: f64) -> f64 {
    normal_expectation(&logistic, lambda, psi2, 1e-13)
}

/// E[h(μ+X) h(μ+Y)] for the correlated pair, by nested Simpson over
/// X and Y | X.
pub fn p11_oracle(gamma: f64, mu: f64, psi2: f64) -> f64 {
    if gamma >= 1.0 {
        return normal_expectation(&|x| logistic(mu + x).powi(2), 0.0, psi2, 1e-12);
    }
    let cond_var = psi2 * (1.0 - gamma * gamma);
    normal_expectation(
        &|x| logistic(mu + x) * normal_expectation(&|y| logistic(mu + y), gamma * x, cond_var, 1e-11),
        0.0,
        psi2,
        1e-11,
    )
}

/// Marginal probability of a table by the naive full tensor rule over all
/// m + n effects (no structural reduction).
pub fn naive_tensor_prob(data: &ResponseTable, mu: f64, sigma2: f64, tau2: f64, order: usize) -> f64 {
    let r = gauss_hermite(order).unwrap();
    let d = data.design();
    let (m, n) = (d.m(), d.n());
    let dims = m + n;
    let mut idx = vec![0usize; dims];
    let mut total = 0.0;
    loop {
        let u: Vec<f64> = (0..m).map(|i| sigma2.sqrt() * r.nodes[idx[i]]).collect();
        let v: Vec<f64> = (0..n).map(|j| tau2.sqrt() * r.nodes[idx[m + j]]).collect();
        let w: f64 = idx.iter().map(|&a| r.weights[a]).product();
        let mut p = 1.0;
        for (i, j, _, y) in data.iter() {
            let h = logistic(mu + u[i] + v[j]);
            p *= if y == 1 { h } else { 1.0 - h };
        }
        total += w * p;
        let mut k = dims;
        loop {
            if k == 0 {
                return total;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// All 2^N outcome tables of a design.
pub fn all_outcomes(design: &CrossedDesign) -> Vec<ResponseTable> {
    (0..1u64 << design.total()).map(|bits| ResponseTable::from_bits(design.clone(), bits)).collect()
}

/// Sample variance.
pub fn sample_var(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

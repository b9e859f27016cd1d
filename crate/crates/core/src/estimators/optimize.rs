//! Derivative-free maximizers.

use crate::error::{Error, Result};

/// Result of a one-dimensional search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptimum {
    pub argmax: f64,
    pub max: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization on `[lo, hi]` until the bracket is narrower
/// than `tol`. Returns the best point evaluated, endpoints included, so a
/// monotone objective lands on the edge it increases toward.
pub fn optimize_scalar(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<ScalarOptimum> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("bad bracket ({lo}, {hi}) or tolerance {tol}")));
    }
    let mut evaluations = 0;
    let mut eval = |x: f64| -> Result<f64> {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("objective is {v} at {x}")))
        }
    };
    let mut best = (lo, eval(lo)?);
    let f_hi = eval(hi)?;
    if f_hi > best.1 {
        best = (hi, f_hi);
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid)?;
    for (x, v) in [(c, fc), (d, fd), (mid, fm)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(ScalarOptimum { argmax: best.0, max: best.1, evaluations })
}

/// Result of a simplex search. On `converged == false` the best vertex
/// found is still returned.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptimum {
    pub argmax: Vec<f64>,
    pub max: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Nelder–Mead maximization with the standard coefficients (reflection 1,
/// expansion 2, contraction 1/2, shrink 1/2). The initial simplex is
/// `start` plus `start + scale[k] e_k`. Converged when every vertex lies
/// within `tol` of the best one. NaN is treated as -inf, so an objective
/// can encode constraints by returning -inf.
pub fn optimize_simplex(
    mut f: impl FnMut(&[f64]) -> f64,
    start: &[f64],
    scale: &[f64],
    tol: f64,
    max_iter: usize,
) -> SimplexOptimum {
    let dim = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(start);
    simplex.push((start.to_vec(), v0));
    for k in 0..dim {
        let mut x = start.to_vec();
        x[k] += scale[k];
        let v = eval(&x);
        simplex.push((x, v));
    }
    let along = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
        from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
    };
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // best first; stable sort keeps earlier vertices ahead on ties
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> =
            (0..dim).map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64).collect();
        let (worst, f_worst) = simplex[dim].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[dim - 1].1;
        let reflected = along(&centroid, &worst, -1.0);
        let f_r = eval(&reflected);
        if f_r > f_best {
            let expanded = along(&centroid, &worst, -2.0);
            let f_e = eval(&expanded);
            simplex[dim] = if f_e > f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r > f_second {
            simplex[dim] = (reflected, f_r);
            continue;
        }
        let outside = f_r > f_worst;
        let contracted = along(&centroid, if outside { &reflected } else { &worst }, 0.5);
        let f_c = eval(&contracted);
        if (outside && f_c >= f_r) || (!outside && f_c > f_worst) {
            simplex[dim] = (contracted, f_c);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = along(&best, &vertex.0, 0.5);
            let v = eval(&x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (argmax, max) = simplex.swap_remove(0);
    SimplexOptimum { argmax, max, converged, iterations, evaluations }
}

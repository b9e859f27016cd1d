//! Gauss–Hermite rules for expectations against N(0, 1), and expectation
//! operators built on them.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 100;
/// Order used by every likelihood evaluation unless told otherwise.
pub const DEFAULT_ORDER: usize = 30;
/// Largest tensor-product rule `expect_tensor` will sum over.
pub const TENSOR_CAP: f64 = 1e7;

/// Nodes and weights for a standard normal variate (probabilists' convention,
/// weights sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// The one-point rule at zero; integrates against a point mass.
    pub fn point_mass() -> Self {
        Self { nodes: vec![0.0], weights: vec![1.0] }
    }
}

/// Orthonormal Hermite values p_0..p_{n} at `x`
/// (p_k = He_k / sqrt(k!)), via the three-term recurrence.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    // returns (p_n, p_{n-1}, sum_{k<n} p_k^2)
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sumsq)
}

pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OrderOutOfRange(order));
    }
    if order == 1 {
        return Ok(QuadratureRule::point_mass());
    }

    // Golub–Welsch: eigenvalues of the Jacobi matrix give the nodes.
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Newton polish on p_n, using p_n' = sqrt(n) p_{n-1}.
    let sqrt_n = (order as f64).sqrt();
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, pm1, _) = orthonormal_hermite(order, *x);
            let dp = sqrt_n * pm1;
            if dp == 0.0 {
                break;
            }
            *x -= p / dp;
        }
    }
    for k in 0..order / 2 {
        let a = 0.5 * (nodes[order - 1 - k] - nodes[k]);
        nodes[k] = -a;
        nodes[order - 1 - k] = a;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }

    // Christoffel weights.
    let mut weights: Vec<f64> = nodes.iter().map(|&x| 1.0 / orthonormal_hermite(order, x).2).collect();
    for k in 0..order / 2 {
        let w = 0.5 * (weights[k] + weights[order - 1 - k]);
        weights[k] = w;
        weights[order - 1 - k] = w;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    Ok(QuadratureRule { nodes, weights })
}

static RULES: [OnceLock<QuadratureRule>; MAX_ORDER] = [const { OnceLock::new() }; MAX_ORDER];

/// Shared, lazily built rule.
pub fn rule(order: usize) -> Result<&'static QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OrderOutOfRange(order));
    }
    Ok(RULES[order - 1].get_or_init(|| gauss_hermite(order).expect("order checked")))
}

/// E f(mean + sqrt(var) Z), Z ~ N(0, 1). `var == 0` evaluates `f(mean)`.
pub fn expect_1d(f: impl Fn(f64) -> f64, mean: f64, var: f64, rule: &QuadratureRule) -> f64 {
    if var == 0.0 {
        return f(mean);
    }
    let sd = var.sqrt();
    rule.nodes.iter().zip(&rule.weights).map(|(&z, &w)| w * f(mean + sd * z)).sum()
}

/// E f(sqrt(var) Z) for Z ~ N(0, I_dims), summing the full tensor product.
pub fn expect_tensor(f: impl Fn(&[f64]) -> f64, dims: usize, var: f64, rule: &QuadratureRule) -> Result<f64> {
    let rule = if var == 0.0 { &QuadratureRule::point_mass() } else { rule };
    let q = rule.order();
    let points = (q as f64).powi(dims as i32);
    if points > TENSOR_CAP {
        return Err(Error::TooLarge { points, cap: TENSOR_CAP });
    }
    if dims == 0 {
        return Ok(f(&[]));
    }
    let sd = var.sqrt();
    let mut idx = vec![0usize; dims];
    let mut x = vec![sd * rule.nodes[0]; dims];
    let mut total = 0.0;
    loop {
        let w: f64 = idx.iter().map(|&a| rule.weights[a]).product();
        total += w * f(&x);
        let mut d = dims;
        loop {
            if d == 0 {
                return Ok(total);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < q {
                x[d] = sd * rule.nodes[idx[d]];
                break;
            }
            idx[d] = 0;
            x[d] = sd * rule.nodes[0];
        }
    }
}

/// E f(X, Y) for a centered bivariate normal with common variance `var`
/// and correlation `corr`, using X = s Z1, Y = s (corr Z1 + sqrt(1 - corr^2) Z2).
pub fn expect_bivariate(f: impl Fn(f64, f64) -> f64, var: f64, corr: f64, rule: &QuadratureRule) -> Result<f64> {
    if var.is_nan() || var <= 0.0 {
        return Err(Error::InvalidParameter(format!("bivariate variance must be positive, got {var}")));
    }
    if !(-1.0..=1.0).contains(&corr) {
        return Err(Error::InvalidParameter(format!("correlation {corr} outside [-1, 1]")));
    }
    let s = var.sqrt();
    if corr.abs() == 1.0 {
        return Ok(expect_1d(|x| f(x, corr * x), 0.0, var, rule));
    }
    let tail = (1.0 - corr * corr).sqrt();
    let mut total = 0.0;
    for (&z1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        let x = s * z1;
        let inner: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&z2, &w2)| w2 * f(x, s * (corr * z1 + tail * z2)))
            .sum();
        total += w1 * inner;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logistic;

    fn normal_moment(p: u32) -> f64 {
        if p % 2 == 1 {
            0.0
        } else {
            (1..p).step_by(2).map(|k| k as f64).product()
        }
    }

    #[test]
    fn small_orders() {
        assert_eq!(gauss_hermite(1).unwrap(), QuadratureRule { nodes: vec![0.0], weights: vec![1.0] });
        let r2 = gauss_hermite(2).unwrap();
        assert!((r2.nodes[0] + 1.0).abs() < 1e-14 && (r2.nodes[1] - 1.0).abs() < 1e-14);
        assert!((r2.weights[0] - 0.5).abs() < 1e-14 && (r2.weights[1] - 0.5).abs() < 1e-14);
        assert!(gauss_hermite(0).is_err());
        assert!(gauss_hermite(101).is_err());
    }

    #[test]
    fn fourth_moment_order_20() {
        let r = gauss_hermite(20).unwrap();
        let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn moment_exactness_up_to_order_20() {
        for order in 1..=20 {
            let r = gauss_hermite(order).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for k in 0..order {
                assert_eq!(r.nodes[k], -r.nodes[order - 1 - k]);
            }
            for p in 0..(2 * order as u32) {
                let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                let want = normal_moment(p);
                // odd moments cancel between symmetric nodes; scale by the absolute moment
                let scale: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.abs().powi(p as i32)).sum();
                assert!((got - want).abs() < 1e-8 * scale.max(1.0), "order {order} moment {p}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn large_orders_are_well_formed() {
        for order in [40, 60, 80, 100] {
            let r = gauss_hermite(order).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.weights.iter().all(|&w| w > 0.0 && w.is_finite()));
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            let var: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn expect_1d_linear_and_quadratic() {
        let r = rule(10).unwrap();
        assert!((expect_1d(|x| x, 1.7, 3.0, r) - 1.7).abs() < 1e-12);
        assert!((expect_1d(|x| x * x, 0.0, 2.0, r) - 2.0).abs() < 1e-10);
        assert!((expect_1d(|x| x * x, 0.0, 2.0, rule(2).unwrap()) - 2.0).abs() < 1e-10);
        assert_eq!(expect_1d(|x| x.sin(), 0.3, 0.0, r), 0.3f64.sin());
    }

    #[test]
    fn tensor_rules() {
        let r = rule(7).unwrap();
        let s = expect_tensor(|x| x.iter().sum(), 3, 1.5, r).unwrap();
        assert!(s.abs() < 1e-12);
        let g = |x: f64| logistic(x + 0.3);
        let prod = expect_tensor(|x| x.iter().map(|&t| g(t)).product(), 3, 2.0, r).unwrap();
        let one = expect_1d(g, 0.0, 2.0, r);
        assert!((prod - one.powi(3)).abs() < 1e-12);
        assert_eq!(expect_tensor(|x| g(x[0]), 1, 2.0, r).unwrap(), one);
        assert!(matches!(expect_tensor(|_| 1.0, 8, 1.0, rule(10).unwrap()), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn bivariate_rules() {
        let r = rule(20).unwrap();
        let cov = expect_bivariate(|x, y| x * y, 2.0, 0.35, r).unwrap();
        assert!((cov - 0.7).abs() < 1e-10);
        let f = |x: f64, y: f64| logistic(x) * logistic(y + 0.5);
        let deg = expect_bivariate(f, 1.3, 1.0, r).unwrap();
        assert!((deg - expect_1d(|x| f(x, x), 0.0, 1.3, r)).abs() < 1e-15);
        let indep = expect_bivariate(|x, y| logistic(x) * logistic(y), 2.0, 0.0, r).unwrap();
        assert!((indep - expect_1d(logistic, 0.0, 2.0, r).powi(2)).abs() < 1e-10);
        let sym = |x: f64, y: f64| logistic(x + 0.4) * logistic(y + 0.4);
        let a = expect_bivariate(sym, 1.1, 0.6, r).unwrap();
        let b = expect_bivariate(|x, y| sym(y, x), 1.1, 0.6, r).unwrap();
        assert!((a - b).abs() < 1e-13);
        assert!(expect_bivariate(f, 0.0, 0.5, r).is_err());
        assert!(expect_bivariate(f, 1.0, 1.5, r).is_err());
    }
}

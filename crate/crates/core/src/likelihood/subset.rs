//! Likelihoods of the independent subsets and the scalar functions that
//! determine their distributions.
//!
//! Each subset element only involves `mu + xi` with `xi ~ N(0, psi2)` (or a
//! correlated pair of such sums), so these are one- or two-dimensional
//! expectations regardless of the design size.

use super::{LikelihoodValue, Method};
use crate::error::{Error, Result};
use crate::model::{logistic, ResponseTable, SubsetKind, SubsetSpec, Theta};
use crate::quadrature::{expect_1d, expect_bivariate, rule};

/// p0(λ) = E h(λ + ξ), ξ ~ N(0, ψ²): the marginal success probability of
/// a single response.
pub fn p0(lambda: f64, psi2: f64, order: usize) -> Result<f64> {
    Ok(expect_1d(logistic, lambda, psi2, rule(order)?))
}

/// (M1, M2) = (E h(μ + ψζ), E h²(μ + ψζ)).
pub fn m_function(mu: f64, psi2: f64, order: usize) -> Result<(f64, f64)> {
    if psi2.is_nan() || psi2 <= 0.0 {
        return Err(Error::InvalidParameter(format!("psi2 must be positive, got {psi2}")));
    }
    let r = rule(order)?;
    let m1 = expect_1d(logistic, mu, psi2, r);
    let m2 = expect_1d(|x| logistic(x).powi(2), mu, psi2, r);
    Ok((m1, m2))
}

/// Masses of the replicate-pair total y·∈{0,1,2} for one specific
/// arrangement of the two replicates: E[h^s (1-h)^(2-s)].
pub fn pair_masses(mu: f64, psi2: f64, order: usize) -> Result<[f64; 3]> {
    let r = rule(order)?;
    let mass = |s: i32| expect_1d(|x| logistic(x).powi(s) * logistic(-x).powi(2 - s), mu, psi2, r);
    Ok([mass(0), mass(1), mass(2)])
}

/// Masses of the off-diagonal pair outcomes (0,0), (0,1), (1,0), (1,1):
/// E[t(y1; μ+X) t(y2; μ+Y)] with var X = var Y = ψ², cor = γ.
pub fn offdiag_masses(mu: f64, psi2: f64, gamma: f64, order: usize) -> Result<[f64; 4]> {
    let r = rule(order)?;
    let term = |y: u8, x: f64| if y == 1 { logistic(mu + x) } else { logistic(-(mu + x)) };
    let mut out = [0.0; 4];
    for (idx, slot) in out.iter_mut().enumerate() {
        let (y1, y2) = ((idx >> 1) as u8, (idx & 1) as u8);
        *slot = expect_bivariate(|x, y| term(y1, x) * term(y2, y), psi2, gamma, r)?;
    }
    Ok(out)
}

/// Mass of the (1, 1) outcome of the off-diagonal pair as a function of
/// the correlation γ.
pub fn p_gamma_11(gamma: f64, mu0: f64, psi2_0: f64, order: usize) -> Result<f64> {
    expect_bivariate(|x, y| logistic(mu0 + x) * logistic(mu0 + y), psi2_0, gamma, rule(order)?)
}

fn subset_of(data: &ResponseTable, kind: SubsetKind) -> Result<SubsetSpec> {
    let spec = SubsetSpec::resolve(data.design(), kind);
    if spec.is_empty() {
        return Err(Error::EmptySubset(kind));
    }
    Ok(spec)
}

fn exact(loglik: f64, evaluations: usize) -> LikelihoodValue {
    LikelihoodValue { loglik, method: Method::ExactQuadrature, mc_std_error: None, evaluations }
}

/// Bernoulli(p0(μ, ψ²)) likelihood of the diagonal responses.
pub fn subset_diag_loglik(data: &ResponseTable, theta: &Theta, order: usize) -> Result<LikelihoodValue> {
    let spec = subset_of(data, SubsetKind::Diagonal)?;
    let ones = spec.observations().iter().filter(|&&t| data.values()[t] == 1).count() as f64;
    let zeros = spec.len() as f64 - ones;
    let p = p0(theta.mu, theta.psi2(), order)?;
    let mut ll = 0.0;
    if ones > 0.0 {
        ll += ones * p.ln();
    }
    if zeros > 0.0 {
        ll += zeros * (1.0 - p).ln();
    }
    Ok(exact(ll, 1))
}

/// Likelihood of the diagonal replicate pairs; depends on θ only through
/// (μ, ψ²).
pub fn subset_pair_loglik(data: &ResponseTable, theta: &Theta, order: usize) -> Result<LikelihoodValue> {
    let spec = subset_of(data, SubsetKind::ReplicatePairDiagonal)?;
    let mut counts = [0usize; 3];
    for el in &spec.elements {
        let s: usize = el.iter().map(|&t| data.values()[t] as usize).sum();
        counts[s] += 1;
    }
    let masses = pair_masses(theta.mu, theta.psi2(), order)?;
    let ll = counts.iter().zip(masses).filter(|(&c, _)| c > 0).map(|(&c, q)| c as f64 * q.ln()).sum();
    Ok(exact(ll, 3))
}

/// Likelihood of the off-diagonal pairs `(y_{i,2i}, y_{i,2i+1})`, which
/// share the row effect and so carry information on γ = σ²/ψ².
pub fn offdiag_pair_loglik(data: &ResponseTable, theta: &Theta, order: usize) -> Result<LikelihoodValue> {
    let spec = subset_of(data, SubsetKind::OffDiagonalPair)?;
    let gamma = theta
        .gamma()
        .ok_or_else(|| Error::InvalidParameter("off-diagonal pair likelihood needs psi2 > 0".into()))?;
    let mut counts = [0usize; 4];
    for el in &spec.elements {
        let idx = ((data.values()[el[0]] as usize) << 1) | data.values()[el[1]] as usize;
        counts[idx] += 1;
    }
    let masses = offdiag_masses(theta.mu, theta.psi2(), gamma, order)?;
    let ll = counts.iter().zip(masses).filter(|(&c, _)| c > 0).map(|(&c, q)| c as f64 * q.ln()).sum();
    Ok(exact(ll, 4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CrossedDesign;
    use crate::quadrature::DEFAULT_ORDER;

    const Q: usize = DEFAULT_ORDER;

    #[test]
    fn p0_symmetric_point_and_tail_bound() {
        assert!((p0(0.0, 2.0, Q).unwrap() - 0.5).abs() < 1e-12);
        assert!(1.0 - p0(5.0, 2.0, Q).unwrap() <= (1.0f64 - 5.0).exp());
        assert_eq!(p0(0.7, 0.0, Q).unwrap(), logistic(0.7));
    }

    #[test]
    fn m_function_identities() {
        for &psi2 in &[0.3, 1.0, 4.0] {
            let (m1, _) = m_function(0.0, psi2, Q).unwrap();
            assert!((m1 - 0.5).abs() < 1e-13);
        }
        for &(mu, psi2) in &[(-1.5, 0.5), (0.2, 2.0), (2.0, 3.0)] {
            let (m1, m2) = m_function(mu, psi2, Q).unwrap();
            assert!(m2 <= m1);
            assert!((m1 - p0(mu, psi2, Q).unwrap()).abs() < 1e-12);
        }
        assert!(m_function(0.0, 0.0, Q).is_err());
    }

    #[test]
    fn pair_masses_normalize_and_are_symmetric() {
        let q = pair_masses(0.3, 2.0, Q).unwrap();
        assert!((q[0] + 2.0 * q[1] + q[2] - 1.0).abs() < 1e-10);
        let q = pair_masses(0.0, 1.7, Q).unwrap();
        assert!((q[0] - q[2]).abs() < 1e-13);
    }

    #[test]
    fn offdiag_masses_limits() {
        let (mu, psi2) = (0.4, 1.8);
        let (m1, m2) = m_function(mu, psi2, Q).unwrap();
        let ind = offdiag_masses(mu, psi2, 0.0, Q).unwrap();
        assert!((ind[3] - m1 * m1).abs() < 1e-10);
        let deg = offdiag_masses(mu, psi2, 1.0, Q).unwrap();
        assert!((deg[3] - m2).abs() < 1e-12);
        let mid = offdiag_masses(mu, psi2, 0.45, Q).unwrap();
        assert!((mid.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert_eq!(p_gamma_11(0.45, mu, psi2, Q).unwrap(), mid[3]);
    }

    #[test]
    fn diag_loglik_closed_form_and_exchangeable() {
        let d = CrossedDesign::full_crossing(3, 4, 1).unwrap();
        let data = ResponseTable::from_fn(d.clone(), |_, _, _| 1).unwrap();
        let th = Theta::new(0.0, 1.0, 1.0).unwrap();
        let ll = subset_diag_loglik(&data, &th, Q).unwrap().loglik;
        assert!((ll - 3.0 * 0.5f64.ln()).abs() < 1e-12);

        let th = Theta::new(0.8, 0.5, 1.2).unwrap();
        let a = ResponseTable::from_fn(d.clone(), |i, j, _| u8::from(i == j && i == 0)).unwrap();
        let b = ResponseTable::from_fn(d, |i, j, _| u8::from(i == j && i == 2)).unwrap();
        assert_eq!(subset_diag_loglik(&a, &th, Q).unwrap().loglik, subset_diag_loglik(&b, &th, Q).unwrap().loglik);
    }

    #[test]
    fn empty_subsets_error() {
        let d = CrossedDesign::full_crossing(2, 1, 1).unwrap();
        let data = ResponseTable::new(d, vec![1, 0]).unwrap();
        let th = Theta::new(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(subset_pair_loglik(&data, &th, Q), Err(Error::EmptySubset(_))));
        assert!(matches!(offdiag_pair_loglik(&data, &th, Q), Err(Error::EmptySubset(_))));
    }
}

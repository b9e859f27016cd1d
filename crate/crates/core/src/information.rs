//! Exact-enumeration machinery for tiny designs.
//!
//! Every outcome table of the design is enumerated with its marginal
//! probability. Scores are central finite differences of the enumerated
//! log-probabilities (log scale for variances, reported on the natural
//! scale), so expected information, its subset counterpart and the
//! conditional-variance loss are all exact sums over a finite support.
//!
//! Designs that are full crossings with a constant replicate count are
//! invariant under row and column permutations; their full-data
//! information can be summed over permutation orbits instead of all 2^N
//! tables, which is what makes a 4x4 design tractable.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::likelihood::{chain_factor, check_interior, marginal_loglik_exact, nudge, p0, DEFAULT_STEP};
use crate::likelihood::{offdiag_masses, pair_masses};
use crate::model::{CrossedDesign, ResponseTable, SubsetKind, SubsetSpec, Theta};

/// Largest N enumerated outcome-by-outcome.
pub const ENUMERATION_CAP: usize = 12;
/// Largest N for orbit enumeration of exchangeable designs.
pub const ORBIT_CAP: usize = 20;

/// Every outcome of a design with its probability under one θ.
#[derive(Debug, Clone)]
pub struct EnumeratedModel {
    pub design: CrossedDesign,
    pub theta: Theta,
    /// Bit `t` of an outcome is observation `t` in flat design order.
    pub outcomes: Vec<u64>,
    pub log_probs: Vec<f64>,
}

impl EnumeratedModel {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.log_probs.iter().map(|l| l.exp()).sum()
    }
}

fn check_cap(design: &CrossedDesign, cap: usize) -> Result<()> {
    if design.total() > cap {
        return Err(Error::EnumerationCap { observations: design.total(), cap });
    }
    Ok(())
}

fn log_probs_of(design: &CrossedDesign, outcomes: &[u64], theta: &Theta, order: usize) -> Result<Vec<f64>> {
    outcomes
        .iter()
        .map(|&bits| {
            let table = ResponseTable::from_bits(design.clone(), bits);
            Ok(marginal_loglik_exact(&table, theta, order)?.loglik)
        })
        .collect()
}

pub fn enumerate_model(design: &CrossedDesign, theta: &Theta, order: usize) -> Result<EnumeratedModel> {
    check_cap(design, ENUMERATION_CAP)?;
    let outcomes: Vec<u64> = (0..1u64 << design.total()).collect();
    let log_probs = log_probs_of(design, &outcomes, theta, order)?;
    Ok(EnumeratedModel { design: design.clone(), theta: *theta, outcomes, log_probs })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                go(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Orbit representatives of an exchangeable design's outcomes under row
/// and column permutations, with orbit sizes. Sizes sum to 2^N.
pub fn exchangeable_orbits(design: &CrossedDesign) -> Result<Vec<(u64, usize)>> {
    if !design.is_exchangeable() {
        return Err(Error::InvalidDesign("orbit enumeration needs a full crossing with constant replicates".into()));
    }
    check_cap(design, ORBIT_CAP)?;
    let (m, n) = (design.m(), design.n());
    let c = design.cells()[0].replicates;
    let row_bits = n * c;
    let row_mask = (1u64 << row_bits) - 1;
    let block_mask = (1u64 << c) - 1;
    let perms = permutations(n);
    let mut counts: HashMap<u64, usize> = HashMap::new();
    let mut rows = vec![0u64; m];
    for bits in 0..1u64 << design.total() {
        let mut best = u64::MAX;
        for perm in &perms {
            for (i, row) in rows.iter_mut().enumerate() {
                let word = (bits >> (i * row_bits)) & row_mask;
                *row = perm
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (dst, &src)| acc | (((word >> (src * c)) & block_mask) << (dst * c)));
            }
            rows.sort_unstable();
            let code = rows.iter().enumerate().fold(0u64, |acc, (i, &r)| acc | (r << (i * row_bits)));
            best = best.min(code);
        }
        *counts.entry(best).or_insert(0) += 1;
    }
    let mut orbits: Vec<(u64, usize)> = counts.into_iter().collect();
    orbits.sort_unstable();
    Ok(orbits)
}

/// Outcomes with multiplicities: the full list for small designs, orbits for
/// larger exchangeable ones.
fn full_support(design: &CrossedDesign) -> Result<Vec<(u64, usize)>> {
    if design.total() <= ENUMERATION_CAP {
        Ok((0..1u64 << design.total()).map(|b| (b, 1)).collect())
    } else if design.is_exchangeable() {
        exchangeable_orbits(design)
    } else {
        Err(Error::EnumerationCap { observations: design.total(), cap: ENUMERATION_CAP })
    }
}

/// Log-probabilities at θ and at θ ± step along each free component.
struct Perturbed {
    base: Vec<f64>,
    up: Vec<Vec<f64>>,
    down: Vec<Vec<f64>>,
    factors: Vec<f64>,
    step: f64,
}

impl Perturbed {
    fn compute(design: &CrossedDesign, outcomes: &[u64], theta: &Theta, order: usize, step: f64) -> Result<Self> {
        check_interior(theta, step)?;
        let free = theta.free_indices();
        let base = log_probs_of(design, outcomes, theta, order)?;
        let mut up = Vec::with_capacity(free.len());
        let mut down = Vec::with_capacity(free.len());
        for &i in &free {
            up.push(log_probs_of(design, outcomes, &nudge(theta, i, step), order)?);
            down.push(log_probs_of(design, outcomes, &nudge(theta, i, -step), order)?);
        }
        let factors = free.iter().map(|&i| chain_factor(theta, i)).collect();
        Ok(Self { base, up, down, factors, step })
    }

    fn dim(&self) -> usize {
        self.factors.len()
    }

    fn score(&self, idx: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|k| (self.up[k][idx] - self.down[k][idx]) / (2.0 * self.step) * self.factors[k])
            .collect()
    }

    /// Marginalizes each perturbation onto subset patterns.
    fn marginalize(&self, outcomes: &[u64], mask: u64) -> (Vec<u64>, Perturbed) {
        let mut keys: BTreeMap<u64, usize> = BTreeMap::new();
        for &o in outcomes {
            let len = keys.len();
            keys.entry(o & mask).or_insert(len);
        }
        // re-index in sorted key order
        let sorted: Vec<u64> = keys.keys().copied().collect();
        let index: HashMap<u64, usize> = sorted.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let collapse = |logs: &[f64]| -> Vec<f64> {
            let mut acc = vec![0.0; sorted.len()];
            for (&o, &l) in outcomes.iter().zip(logs) {
                acc[index[&(o & mask)]] += l.exp();
            }
            acc.into_iter().map(f64::ln).collect()
        };
        let marg = Perturbed {
            base: collapse(&self.base),
            up: self.up.iter().map(|v| collapse(v)).collect(),
            down: self.down.iter().map(|v| collapse(v)).collect(),
            factors: self.factors.clone(),
            step: self.step,
        };
        (sorted, marg)
    }
}

fn outer_sum(weights: impl Iterator<Item = (f64, Vec<f64>)>, dim: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    for (w, s) in weights {
        for a in 0..dim {
            for b in 0..dim {
                out[(a, b)] += w * s[a] * s[b];
            }
        }
    }
    out
}

/// Expected information over the free parameters, of the full data or of
/// the subset's marginal distribution, with a given difference step.
pub fn fisher_info_with_step(
    design: &CrossedDesign,
    theta: &Theta,
    subset: Option<&SubsetSpec>,
    order: usize,
    step: f64,
) -> Result<DMatrix<f64>> {
    match subset {
        None => {
            let support = full_support(design)?;
            let outcomes: Vec<u64> = support.iter().map(|s| s.0).collect();
            let pert = Perturbed::compute(design, &outcomes, theta, order, step)?;
            Ok(outer_sum(
                support.iter().enumerate().map(|(k, &(_, mult))| (mult as f64 * pert.base[k].exp(), pert.score(k))),
                pert.dim(),
            ))
        }
        Some(spec) => {
            check_cap(design, ENUMERATION_CAP)?;
            let outcomes: Vec<u64> = (0..1u64 << design.total()).collect();
            let pert = Perturbed::compute(design, &outcomes, theta, order, step)?;
            let (_, marg) = pert.marginalize(&outcomes, spec.mask());
            Ok(outer_sum((0..marg.base.len()).map(|k| (marg.base[k].exp(), marg.score(k))), marg.dim()))
        }
    }
}

pub fn fisher_info(
    design: &CrossedDesign,
    theta: &Theta,
    subset: Option<&SubsetSpec>,
    order: usize,
) -> Result<DMatrix<f64>> {
    fisher_info_with_step(design, theta, subset, order, DEFAULT_STEP)
}

/// Full, subset and lost information, with the residual of
/// `I_full = I_subset + loss`.
#[derive(Debug, Clone)]
pub struct InfoMatrices {
    pub i_full: DMatrix<f64>,
    pub i_subset: DMatrix<f64>,
    pub loss: DMatrix<f64>,
    pub residual: f64,
}

/// Residual tolerance of the information-loss identity.
pub const IDENTITY_TOL: f64 = 1e-5;

/// Computes the loss as E[Var(full score | subset data)] by grouping
/// outcomes on their subset bits, independently of the two informations.
pub fn info_loss(design: &CrossedDesign, theta: &Theta, subset: &SubsetSpec, order: usize) -> Result<InfoMatrices> {
    check_cap(design, ENUMERATION_CAP)?;
    let outcomes: Vec<u64> = (0..1u64 << design.total()).collect();
    let pert = Perturbed::compute(design, &outcomes, theta, order, DEFAULT_STEP)?;
    let dim = pert.dim();
    let i_full = outer_sum((0..outcomes.len()).map(|k| (pert.base[k].exp(), pert.score(k))), dim);
    let mask = subset.mask();
    let (keys, marg) = pert.marginalize(&outcomes, mask);
    let i_subset = outer_sum((0..keys.len()).map(|k| (marg.base[k].exp(), marg.score(k))), dim);

    let mut loss = DMatrix::zeros(dim, dim);
    for (g, &key) in keys.iter().enumerate() {
        let members: Vec<usize> = (0..outcomes.len()).filter(|&k| outcomes[k] & mask == key).collect();
        let p1 = marg.base[g].exp();
        let cond: Vec<f64> = members.iter().map(|&k| pert.base[k].exp() / p1).collect();
        let scores: Vec<Vec<f64>> = members.iter().map(|&k| pert.score(k)).collect();
        let mean: Vec<f64> =
            (0..dim).map(|a| cond.iter().zip(&scores).map(|(w, s)| w * s[a]).sum()).collect();
        for (w, s) in cond.iter().zip(&scores) {
            for a in 0..dim {
                for b in 0..dim {
                    loss[(a, b)] += p1 * w * (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
    }
    let residual = (&i_full - &i_subset - &loss).abs().max();
    if residual >= IDENTITY_TOL {
        return Err(Error::IdentityViolation(residual));
    }
    Ok(InfoMatrices { i_full, i_subset, loss, residual })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// One conditioning group of the subset inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityRow {
    /// Subset responses in subset order, e.g. `"01"`.
    pub y1_pattern: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetInequalityReport {
    pub rows: Vec<InequalityRow>,
    /// max(lhs - rhs) over all subset patterns.
    pub max_excess: f64,
    pub passed: bool,
}

/// Tolerance on lhs - rhs.
pub const INEQUALITY_TOL: f64 = 1e-8;

impl SubsetInequalityReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y1_pattern", "lhs", "rhs", "slack"])?;
        for r in &self.rows {
            w.write_record([r.y1_pattern.clone(), r.lhs.to_string(), r.rhs.to_string(), r.slack.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn pattern_of(bits: u64, observations: &[usize]) -> String {
    observations.iter().map(|&t| if (bits >> t) & 1 == 1 { '1' } else { '0' }).collect()
}

/// For every subset pattern y1, compares
/// `P_θ0{ p_θ0(y) <= λ(y1) p_θ(y) | y1 }` (exact sum over completions) with
/// `λ(y1) p_{1,θ}(y1) / p_{1,θ0}(y1)`.
pub fn check_subset_inequality(
    design: &CrossedDesign,
    theta0: &Theta,
    theta: &Theta,
    subset: &SubsetSpec,
    lambda: impl Fn(&str) -> f64,
    order: usize,
) -> Result<SubsetInequalityReport> {
    let null = enumerate_model(design, theta0, order)?;
    let alt = enumerate_model(design, theta, order)?;
    let mask = subset.mask();
    let observations = subset.observations();
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, &o) in null.outcomes.iter().enumerate() {
        groups.entry(o & mask).or_default().push(k);
    }
    let mut rows = Vec::with_capacity(groups.len());
    let mut max_excess = f64::NEG_INFINITY;
    for (key, members) in groups {
        let pattern = pattern_of(key, &observations);
        let lam = lambda(&pattern);
        if lam.is_nan() || lam <= 0.0 {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lam} at {pattern}")));
        }
        let p1_null: f64 = members.iter().map(|&k| null.log_probs[k].exp()).sum();
        let p1_alt: f64 = members.iter().map(|&k| alt.log_probs[k].exp()).sum();
        let event: f64 = members
            .iter()
            .filter(|&&k| null.log_probs[k] <= lam.ln() + alt.log_probs[k])
            .map(|&k| null.log_probs[k].exp())
            .sum();
        let lhs = event / p1_null + 0.0;
        let rhs = lam * p1_alt / p1_null;
        max_excess = max_excess.max(lhs - rhs);
        rows.push(InequalityRow { y1_pattern: pattern, lhs, rhs, slack: rhs - lhs });
    }
    Ok(SubsetInequalityReport { rows, max_excess, passed: max_excess <= INEQUALITY_TOL })
}

/// E_θ0[ min(1, p_{1,θ}(y1) / p_{1,θ0}(y1)) ], the expectation of the
/// (λ = 1) bound on the conditional exceedance probability. It shrinks as
/// the subset grows when θ ≠ θ0.
pub fn ratio_bound_expectation(
    design: &CrossedDesign,
    theta0: &Theta,
    theta: &Theta,
    subset: &SubsetSpec,
    order: usize,
) -> Result<f64> {
    let report = check_subset_inequality(design, theta0, theta, subset, |_| 1.0, order)?;
    let null = enumerate_model(design, theta0, order)?;
    let mask = subset.mask();
    let observations = subset.observations();
    let mut p1: BTreeMap<String, f64> = BTreeMap::new();
    for (&o, &l) in null.outcomes.iter().zip(&null.log_probs) {
        *p1.entry(pattern_of(o & mask, &observations)).or_insert(0.0) += l.exp();
    }
    Ok(report.rows.iter().map(|r| p1[&r.y1_pattern] * r.rhs.min(1.0)).sum())
}

/// Expected information per element of an independent subset, from the
/// element's finite outcome distribution.
fn element_information(
    theta: &Theta,
    step: f64,
    masses: impl Fn(&Theta) -> Result<Vec<f64>>,
) -> Result<DMatrix<f64>> {
    check_interior(theta, step)?;
    let free = theta.free_indices();
    let base = masses(theta)?;
    let mut scores = vec![vec![0.0; free.len()]; base.len()];
    for (k, &i) in free.iter().enumerate() {
        let up = masses(&nudge(theta, i, step))?;
        let down = masses(&nudge(theta, i, -step))?;
        for o in 0..base.len() {
            scores[o][k] = (up[o].ln() - down[o].ln()) / (2.0 * step) * chain_factor(theta, i);
        }
    }
    Ok(outer_sum(base.iter().copied().zip(scores), free.len()))
}

/// Information carried by the subsets an estimator of `theta`'s free
/// parameters uses: the diagonal when only μ is free, otherwise the
/// diagonal replicate pairs plus the off-diagonal pairs (treated as
/// independent of each other).
pub fn subset_information(design: &CrossedDesign, theta: &Theta, order: usize) -> Result<DMatrix<f64>> {
    let step = DEFAULT_STEP;
    if theta.free.count() == 1 && theta.free.mu {
        let diag = SubsetSpec::resolve(design, SubsetKind::Diagonal);
        if diag.is_empty() {
            return Err(Error::EmptySubset(SubsetKind::Diagonal));
        }
        let per = element_information(theta, step, |th| {
            let p = p0(th.mu, th.psi2(), order)?;
            Ok(vec![1.0 - p, p])
        })?;
        return Ok(per * diag.len() as f64);
    }
    let pairs = SubsetSpec::resolve(design, SubsetKind::ReplicatePairDiagonal);
    let off = SubsetSpec::resolve(design, SubsetKind::OffDiagonalPair);
    if pairs.is_empty() {
        return Err(Error::EmptySubset(SubsetKind::ReplicatePairDiagonal));
    }
    let per_pair = element_information(theta, step, |th| {
        let q = pair_masses(th.mu, th.psi2(), order)?;
        Ok(vec![q[0], q[1], q[1], q[2]])
    })?;
    let mut total = per_pair * pairs.len() as f64;
    if !off.is_empty() && theta.psi2() > 0.0 {
        let per_off = element_information(theta, step, |th| {
            Ok(offdiag_masses(th.mu, th.psi2(), th.gamma().unwrap_or(0.0), order)?.to_vec())
        })?;
        total += per_off * off.len() as f64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logistic;

    #[test]
    fn single_observation_masses() {
        let d = CrossedDesign::full_crossing(1, 1, 1).unwrap();
        let th = Theta::new(0.3, 1.0, 1.0).unwrap();
        let e = enumerate_model(&d, &th, 30).unwrap();
        let p = p0(0.3, 2.0, 30).unwrap();
        let probs = e.probs();
        assert!((probs[0] - (1.0 - p)).abs() < 1e-8 && (probs[1] - p).abs() < 1e-8, "{probs:?} vs {p}");
    }

    #[test]
    fn cap_is_enforced() {
        let d = CrossedDesign::full_crossing(3, 5, 1).unwrap();
        let th = Theta::new(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(enumerate_model(&d, &th, 30), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn orbit_sizes_sum_to_support() {
        let d = CrossedDesign::full_crossing(3, 3, 1).unwrap();
        let orbits = exchangeable_orbits(&d).unwrap();
        assert_eq!(orbits.iter().map(|o| o.1).sum::<usize>(), 512);
        // 3x3 binary matrices up to row and column permutations
        assert_eq!(orbits.len(), 36);
        let d = CrossedDesign::full_crossing(4, 4, 1).unwrap();
        assert_eq!(exchangeable_orbits(&d).unwrap().len(), 317);
    }

    #[test]
    fn degenerate_information_is_logistic() {
        let d = CrossedDesign::full_crossing(2, 2, 1).unwrap();
        let th = Theta::mu_only(0.4, 0.0, 0.0).unwrap();
        let info = fisher_info(&d, &th, None, 30).unwrap();
        let h = logistic(0.4);
        assert!((info[(0, 0)] - 4.0 * h * (1.0 - h)).abs() < 1e-5);
    }

    #[test]
    fn subset_information_matches_diag_enumeration() {
        let d = CrossedDesign::full_crossing(2, 2, 1).unwrap();
        let th = Theta::mu_only(0.2, 1.0, 1.0).unwrap();
        let analytic = subset_information(&d, &th, 30).unwrap();
        let spec = SubsetSpec::resolve(&d, SubsetKind::Diagonal);
        let enumerated = fisher_info(&d, &th, Some(&spec), 30).unwrap();
        assert!((analytic[(0, 0)] - enumerated[(0, 0)]).abs() < 1e-8);
    }
}

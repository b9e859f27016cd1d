//! Numerical checks of the identification argument: the subset
//! Kullback–Leibler terms, their separation away from θ0, injectivity of
//! (μ, ψ²) ↦ (M1, M2), and monotonicity of P(1, 1) in γ for the
//! off-diagonal pairs.
//!
//! Subset elements are i.i.d., so every expectation here is per element and
//! does not depend on the number of elements.

use std::io::Write;

use crate::error::{Error, Result};
use crate::likelihood::{m_function, offdiag_masses, p0, p_gamma_11, pair_masses};
use crate::model::{SubsetKind, Theta};

/// Tolerance on outcome masses for declaring two subset laws equal.
pub const COINCIDE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlReport {
    pub theta: Theta,
    pub theta0: Theta,
    pub kind: SubsetKind,
    /// E_θ0 log(p_θ / p_θ0) for one element; never positive.
    pub kl: f64,
    /// Whether the two element distributions agree within [`COINCIDE_TOL`].
    pub coincide: bool,
}

/// Outcome masses of one subset element.
pub fn element_masses(theta: &Theta, kind: SubsetKind, order: usize) -> Result<Vec<f64>> {
    let psi2 = theta.psi2();
    match kind {
        SubsetKind::Diagonal => {
            let p = p0(theta.mu, psi2, order)?;
            Ok(vec![1.0 - p, p])
        }
        SubsetKind::ReplicatePairDiagonal => {
            if psi2 <= 0.0 {
                return Err(Error::InvalidParameter("pair subsets need psi2 > 0".into()));
            }
            let q = pair_masses(theta.mu, psi2, order)?;
            Ok(vec![q[0], q[1], q[1], q[2]])
        }
        SubsetKind::OffDiagonalPair => {
            let gamma = theta.gamma().ok_or_else(|| Error::InvalidParameter("pair subsets need psi2 > 0".into()))?;
            Ok(offdiag_masses(theta.mu, psi2, gamma, order)?.to_vec())
        }
    }
}

pub fn kl_subset(theta: &Theta, theta0: &Theta, kind: SubsetKind, order: usize) -> Result<KlReport> {
    let p = element_masses(theta, kind, order)?;
    let q = element_masses(theta0, kind, order)?;
    let coincide = p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= COINCIDE_TOL);
    // Coinciding masses give a KL of order COINCIDE_TOL^2; report the exact
    // zero rather than rounding noise of either sign.
    let kl = if coincide {
        0.0
    } else {
        q.iter().zip(&p).filter(|(&q0, _)| q0 > 0.0).map(|(&q0, &p1)| q0 * (p1 / q0).ln()).sum::<f64>()
    };
    Ok(KlReport { theta: *theta, theta0: *theta0, kind, kl, coincide })
}

/// One grid point of the separation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct B2Point {
    pub theta: Theta,
    pub kl_pair: f64,
    pub kl_offdiag: f64,
}

impl B2Point {
    /// The better-separating of the two subsets.
    pub fn separation(&self) -> f64 {
        self.kl_pair.min(self.kl_offdiag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct B2Report {
    pub theta0: Theta,
    pub points: Vec<B2Point>,
    /// Grid points dropped because a variance was negative or ψ² = 0.
    pub skipped: Vec<[f64; 3]>,
    /// Point whose best separation is weakest.
    pub worst: B2Point,
    /// -worst.separation(); the check passes iff positive.
    pub delta: f64,
    pub passed: bool,
}

fn axis(lo: f64, hi: f64, density: usize) -> Vec<f64> {
    if density <= 1 || lo == hi {
        return vec![lo];
    }
    (0..density).map(|k| lo + (hi - lo) * k as f64 / (density - 1) as f64).collect()
}

/// Evaluates both pair-subset KL terms on the cube θ0 ± M (`density` points
/// per axis), keeping points with ε ≤ ‖θ − θ0‖ ≤ M. Per-element
/// expectations do not depend on the number of elements, so the limit over
/// design sizes is this single evaluation.
pub fn check_b2_grid(theta0: &Theta, epsilon: f64, big_m: f64, density: usize, order: usize) -> Result<B2Report> {
    if theta0.sigma2 <= 0.0 || theta0.tau2 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "separation needs positive true variances, got sigma2={}, tau2={}",
            theta0.sigma2, theta0.tau2
        )));
    }
    if !(epsilon > 0.0) || epsilon > big_m {
        return Err(Error::EmptyGrid(format!("annulus {epsilon} <= |theta - theta0| <= {big_m} is empty")));
    }
    let t0 = theta0.values();
    let axes: Vec<Vec<f64>> = t0.iter().map(|&c| axis(c - big_m, c + big_m, density)).collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &mu in &axes[0] {
        for &s2 in &axes[1] {
            for &t2 in &axes[2] {
                let dist = ((mu - t0[0]).powi(2) + (s2 - t0[1]).powi(2) + (t2 - t0[2]).powi(2)).sqrt();
                if dist < epsilon || dist > big_m {
                    continue;
                }
                if s2 < 0.0 || t2 < 0.0 || s2 + t2 <= 0.0 {
                    skipped.push([mu, s2, t2]);
                    continue;
                }
                let theta = Theta { mu, sigma2: s2, tau2: t2, free: theta0.free };
                let kl_pair = kl_subset(&theta, theta0, SubsetKind::ReplicatePairDiagonal, order)?.kl;
                let kl_offdiag = kl_subset(&theta, theta0, SubsetKind::OffDiagonalPair, order)?.kl;
                points.push(B2Point { theta, kl_pair, kl_offdiag });
            }
        }
    }
    let worst = *points
        .iter()
        .max_by(|a, b| a.separation().total_cmp(&b.separation()))
        .ok_or_else(|| Error::EmptyGrid("no admissible grid point in the annulus".into()))?;
    let delta = -worst.separation();
    Ok(B2Report { theta0: *theta0, points, skipped, worst, delta, passed: delta > 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectivityReport {
    /// (μ, ψ², M1, M2) per grid point.
    pub values: Vec<[f64; 4]>,
    /// Minimum of ‖M(a) − M(b)‖ / ‖(μ, ψ)(a) − (μ, ψ)(b)‖ over distinct pairs;
    /// +inf when the grid has a single point.
    pub min_ratio: f64,
    pub worst_pair: Option<([f64; 2], [f64; 2])>,
    pub warning: Option<String>,
    pub passed: bool,
}

/// Checks (μ, ψ²) ↦ (M1, M2) for injectivity on a grid, measuring
/// separation in (μ, ψ) coordinates. A certificate for the grid only.
pub fn check_m_injective(
    mu_range: (f64, f64),
    psi2_range: (f64, f64),
    density: usize,
    order: usize,
) -> Result<InjectivityReport> {
    if !(psi2_range.0 > 0.0) || psi2_range.1 < psi2_range.0 || mu_range.1 < mu_range.0 {
        return Err(Error::InvalidParameter(format!("bad ranges mu {mu_range:?}, psi2 {psi2_range:?}")));
    }
    let mut values = Vec::new();
    for &mu in &axis(mu_range.0, mu_range.1, density) {
        for &psi2 in &axis(psi2_range.0, psi2_range.1, density) {
            let (m1, m2) = m_function(mu, psi2, order)?;
            values.push([mu, psi2, m1, m2]);
        }
    }
    let mut min_ratio = f64::INFINITY;
    let mut worst_pair = None;
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            let (x, y) = (values[a], values[b]);
            let arg = ((x[0] - y[0]).powi(2) + (x[1].sqrt() - y[1].sqrt()).powi(2)).sqrt();
            let img = ((x[2] - y[2]).powi(2) + (x[3] - y[3]).powi(2)).sqrt();
            let ratio = img / arg;
            if ratio < min_ratio {
                min_ratio = ratio;
                worst_pair = Some(([x[0], x[1]], [y[0], y[1]]));
            }
        }
    }
    let warning = (values.len() < 2).then(|| "single grid point: injectivity check is vacuous".to_string());
    Ok(InjectivityReport { values, min_ratio, worst_pair, warning, passed: min_ratio > 0.0 })
}

/// Required gap between neighbouring values of P(1, 1).
pub const MONOTONE_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SlepianReport {
    /// (γ, P_γ(1, 1)) along the grid.
    pub values: Vec<(f64, f64)>,
    /// Smallest increase between neighbours; +inf for a single point.
    pub min_increment: f64,
    pub warning: Option<String>,
    pub passed: bool,
}

pub fn check_slepian_monotone(mu0: f64, psi2_0: f64, gamma_grid: &[f64], order: usize) -> Result<SlepianReport> {
    if gamma_grid.iter().any(|g| !(0.0..=1.0).contains(g)) || gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("gamma grid must be strictly increasing inside [0, 1]".into()));
    }
    let values: Vec<(f64, f64)> =
        gamma_grid.iter().map(|&g| Ok((g, p_gamma_11(g, mu0, psi2_0, order)?))).collect::<Result<_>>()?;
    let min_increment = values.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
    let warning = (values.len() < 2).then(|| "fewer than two grid points: monotonicity check is vacuous".to_string());
    Ok(SlepianReport { values, min_increment, warning, passed: min_increment > MONOTONE_MARGIN })
}

/// Summary of all identification checks, one CSV line per check.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyReport {
    pub lines: Vec<(String, String, f64, bool)>,
}

impl IdentifyReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.3)
    }

    pub fn push(&mut self, check: &str, detail: impl Into<String>, value: f64, pass: bool) {
        self.lines.push((check.to_string(), detail.into(), value, pass));
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check", "detail", "value", "pass"])?;
        for (check, detail, value, pass) in &self.lines {
            w.write_record([check.as_str(), detail.as_str(), &value.to_string(), &pass.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_vanishes_at_truth() {
        let t = Theta::new(0.3, 1.0, 0.5).unwrap();
        for kind in [SubsetKind::Diagonal, SubsetKind::ReplicatePairDiagonal, SubsetKind::OffDiagonalPair] {
            let r = kl_subset(&t, &t, kind, 30).unwrap();
            assert_eq!(r.kl, 0.0);
            assert!(r.coincide);
        }
    }

    #[test]
    fn pair_subset_is_blind_to_gamma() {
        let a = Theta::new(0.3, 1.5, 0.5).unwrap();
        let b = Theta::new(0.3, 0.5, 1.5).unwrap();
        let r = kl_subset(&a, &b, SubsetKind::ReplicatePairDiagonal, 30).unwrap();
        assert!(r.kl.abs() < 1e-10 && r.coincide);
        let off = kl_subset(&a, &b, SubsetKind::OffDiagonalPair, 30).unwrap();
        assert!(off.kl < 0.0 && !off.coincide);
    }

    #[test]
    fn b2_preconditions() {
        let t0 = Theta::new(0.2, 1.0, 0.0).unwrap();
        assert!(matches!(check_b2_grid(&t0, 0.2, 3.0, 7, 30), Err(Error::InvalidParameter(_))));
        let t0 = Theta::new(0.2, 1.0, 0.8).unwrap();
        assert!(matches!(check_b2_grid(&t0, 4.0, 3.0, 7, 30), Err(Error::EmptyGrid(_))));
    }

    #[test]
    fn vacuous_grids_pass_with_warning() {
        let m = check_m_injective((0.0, 0.0), (1.0, 1.0), 5, 30).unwrap();
        assert!(m.passed && m.warning.is_some());
        let s = check_slepian_monotone(0.0, 2.0, &[0.5], 30).unwrap();
        assert!(s.passed && s.warning.is_some());
        assert!(check_slepian_monotone(0.0, 2.0, &[0.5, 0.2], 30).is_err());
    }
}

//! Subset, full-data and finite-grid maximum likelihood.

use std::fmt;

use super::optimize::{optimize_scalar, optimize_simplex};
use crate::error::{Error, Result};
use crate::likelihood::{offdiag_pair_loglik, p0, subset_pair_loglik, LikelihoodMethod};
use crate::model::{logit, FreeMask, ResponseTable, SubsetKind, SubsetSpec, Theta, MU_BOUNDS, VAR_BOUNDS};

/// Which estimator produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitMethod {
    Subset,
    FullQuadrature,
    FullMonteCarlo,
    FiniteGrid,
}

impl FitMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            FitMethod::Subset => "subset",
            FitMethod::FullQuadrature => "full_quadrature",
            FitMethod::FullMonteCarlo => "full_mc",
            FitMethod::FiniteGrid => "finite_grid",
        }
    }

    fn of(method: &LikelihoodMethod) -> Self {
        match method {
            LikelihoodMethod::Exact { .. } => FitMethod::FullQuadrature,
            LikelihoodMethod::MonteCarlo { .. } | LikelihoodMethod::ImportanceSampling { .. } => FitMethod::FullMonteCarlo,
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `loglik` is the estimator's own objective re-evaluated at `theta_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub loglik: f64,
    pub converged: bool,
    /// Some free component sits at (or was clamped to) the parameter box.
    pub boundary: bool,
    pub evaluations: usize,
    pub method: FitMethod,
    /// Position of the winner for finite-grid fits.
    pub grid_index: Option<usize>,
}

/// Bisection tolerance on μ for the diagonal-subset estimator.
const BISECTION_TOL: f64 = 1e-12;

fn diag_mean(data: &ResponseTable) -> Result<(f64, usize)> {
    let spec = SubsetSpec::resolve(data.design(), SubsetKind::Diagonal);
    if spec.is_empty() {
        return Err(Error::EmptySubset(SubsetKind::Diagonal));
    }
    let ones = spec.observations().iter().filter(|&&t| data.values()[t] == 1).count();
    Ok((ones as f64 / spec.len() as f64, spec.len()))
}

/// Subset MLE. With only μ free it solves p0(μ, ψ²) = ȳ over the diagonal
/// (ψ² taken from `template`). With all three parameters free it fits
/// (μ, ψ²) to the diagonal replicate pairs, then γ to the off-diagonal
/// pairs with (μ, ψ²) plugged in.
pub fn fit_subset_mle(data: &ResponseTable, template: &Theta, order: usize) -> Result<FitResult> {
    if template.free == FreeMask::MU_ONLY {
        fit_diag_mu(data, template, order)
    } else if template.free == FreeMask::ALL {
        fit_two_stage(data, template, order)
    } else {
        Err(Error::InvalidParameter(format!(
            "subset MLE supports mu-only or all-free parameters, got {:?}",
            template.free_names()
        )))
    }
}

fn fit_diag_mu(data: &ResponseTable, template: &Theta, order: usize) -> Result<FitResult> {
    let (ybar, count) = diag_mean(data)?;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Err(Error::SubsetMleDiverges(ybar));
    }
    let psi2 = template.psi2();
    let g = |mu: f64| p0(mu, psi2, order).map(|p| p - ybar);
    let (mut lo, mut hi) = MU_BOUNDS;
    let mut evaluations = 2;
    let mut boundary = false;
    let mu = if g(lo)? >= 0.0 {
        boundary = true;
        lo
    } else if g(hi)? <= 0.0 {
        boundary = true;
        hi
    } else {
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            evaluations += 1;
            if g(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let theta_hat = Theta { mu, ..*template };
    let p = p0(mu, psi2, order)?;
    let ones = ybar * count as f64;
    let loglik = ones * p.ln() + (count as f64 - ones) * (1.0 - p).ln();
    Ok(FitResult {
        theta_hat,
        loglik,
        converged: true,
        boundary,
        evaluations,
        method: FitMethod::Subset,
        grid_index: None,
    })
}

/// ψ² range searched by the replicate-pair stage.
const PSI2_BOUNDS: (f64, f64) = (2.0 * VAR_BOUNDS.0, 2.0 * VAR_BOUNDS.1);

fn fit_two_stage(data: &ResponseTable, template: &Theta, order: usize) -> Result<FitResult> {
    let pairs = SubsetSpec::resolve(data.design(), SubsetKind::ReplicatePairDiagonal);
    if pairs.is_empty() {
        return Err(Error::EmptySubset(SubsetKind::ReplicatePairDiagonal));
    }
    if SubsetSpec::resolve(data.design(), SubsetKind::OffDiagonalPair).is_empty() {
        return Err(Error::EmptySubset(SubsetKind::OffDiagonalPair));
    }
    let obs = pairs.observations();
    let ybar = obs.iter().filter(|&&t| data.values()[t] == 1).count() as f64 / obs.len() as f64;
    let split = |mu: f64, psi2: f64, gamma: f64| Theta { mu, sigma2: gamma * psi2, tau2: (1.0 - gamma) * psi2, ..*template };

    let stage1 = optimize_simplex(
        |w| {
            let (mu, psi2) = (w[0], w[1].exp());
            if !(MU_BOUNDS.0..=MU_BOUNDS.1).contains(&mu) || !(PSI2_BOUNDS.0..=PSI2_BOUNDS.1).contains(&psi2) {
                return f64::NEG_INFINITY;
            }
            subset_pair_loglik(data, &split(mu, psi2, 0.5), order).map_or(f64::NAN, |v| v.loglik)
        },
        &[logit(ybar.clamp(0.05, 0.95)), 0.0],
        &[0.5, 0.5],
        1e-7,
        2000,
    );
    let (mu, psi2) = (stage1.argmax[0], stage1.argmax[1].exp());
    let stage2 = optimize_scalar(
        |gamma| offdiag_pair_loglik(data, &split(mu, psi2, gamma), order).map_or(f64::NAN, |v| v.loglik),
        0.0,
        1.0,
        1e-7,
    )?;
    let gamma = stage2.argmax;
    let raw = split(mu, psi2, gamma);
    let mut theta_hat = raw;
    theta_hat.sigma2 = raw.sigma2.clamp(VAR_BOUNDS.0, VAR_BOUNDS.1);
    theta_hat.tau2 = raw.tau2.clamp(VAR_BOUNDS.0, VAR_BOUNDS.1);
    let boundary = theta_hat != raw
        || (mu - MU_BOUNDS.0).abs() < 1e-3
        || (MU_BOUNDS.1 - mu).abs() < 1e-3
        || psi2 <= PSI2_BOUNDS.0 * 1.001
        || psi2 >= PSI2_BOUNDS.1 * 0.999;
    let loglik = subset_pair_loglik(data, &theta_hat, order)?.loglik + offdiag_pair_loglik(data, &theta_hat, order)?.loglik;
    Ok(FitResult {
        theta_hat,
        loglik,
        converged: stage1.converged,
        boundary,
        evaluations: stage1.evaluations + stage2.evaluations,
        method: FitMethod::Subset,
        grid_index: None,
    })
}

/// Controls for [`fit_full_mle`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting point; the subset MLE (falling back to the template) when absent.
    pub init: Option<Theta>,
    /// Argument tolerance: bracket width for μ-only, simplex diameter on the
    /// working scale otherwise.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial half-width of the μ bracket around the start.
    pub bracket: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { init: None, tol: 1e-6, max_iter: 2000, bracket: 1.5 }
    }
}

/// Distance to a box edge at which a fitted μ is reported as a boundary fit.
const EDGE: f64 = 1e-3;

/// Maximizes the marginal likelihood over the free parameters of
/// `template`. μ alone is searched by golden section on a bracket that is
/// widened while the maximum sits on an interior edge; several free
/// parameters use the simplex on the working scale.
pub fn fit_full_mle(
    data: &ResponseTable,
    template: &Theta,
    method: &LikelihoodMethod,
    opts: &FitOptions,
) -> Result<FitResult> {
    if template.free.count() == 0 {
        return Err(Error::InvalidParameter("no free parameters to fit".into()));
    }
    let init = match opts.init {
        Some(t) => t,
        None => fit_subset_mle(data, template, method.order()).map(|r| r.theta_hat).unwrap_or(*template),
    };
    let mut init = Theta { free: template.free, ..init };
    for i in init.free_indices() {
        let (lo, hi) = if i == 0 { MU_BOUNDS } else { VAR_BOUNDS };
        init.set(i, init.values()[i].clamp(lo, hi));
    }
    // surfaces cap and parameter errors before searching
    let init_ll = method.evaluate(data, &init)?.loglik;
    let mut evaluations = 1;
    let mut objective = |th: &Theta| -> f64 {
        evaluations += 1;
        if !th.in_box() {
            return f64::NEG_INFINITY;
        }
        method.evaluate(data, th).map_or(f64::NAN, |v| v.loglik)
    };

    let (mut theta_hat, mut converged, mut boundary) = if template.free == FreeMask::MU_ONLY {
        let mut half = opts.bracket;
        loop {
            let lo = (init.mu - half).max(MU_BOUNDS.0);
            let hi = (init.mu + half).min(MU_BOUNDS.1);
            let r = optimize_scalar(|mu| objective(&Theta { mu, ..init }), lo, hi, opts.tol)?;
            let interior_edge =
                (r.argmax - lo < 2.0 * opts.tol && lo > MU_BOUNDS.0) || (hi - r.argmax < 2.0 * opts.tol && hi < MU_BOUNDS.1);
            if !interior_edge {
                let at_box = r.argmax - MU_BOUNDS.0 < EDGE || MU_BOUNDS.1 - r.argmax < EDGE;
                let mu = if opts.tol < POLISH_BELOW && !at_box {
                    polish_root(|mu| objective(&Theta { mu, ..init }), r.argmax, opts.tol)
                } else {
                    r.argmax
                };
                break (Theta { mu, ..init }, true, at_box);
            }
            half *= 2.0;
        }
    } else {
        let start = init.to_working();
        let r = optimize_simplex(
            |w| objective(&init.from_working(w)),
            &start,
            &vec![0.5; start.len()],
            opts.tol,
            opts.max_iter,
        );
        let th = init.from_working(&r.argmax);
        let at_box = th.free_indices().into_iter().any(|i| {
            let v = th.values()[i];
            if i == 0 {
                v - MU_BOUNDS.0 < EDGE || MU_BOUNDS.1 - v < EDGE
            } else {
                (v / VAR_BOUNDS.0).ln() < EDGE || (VAR_BOUNDS.1 / v).ln() < EDGE
            }
        });
        (th, r.converged, at_box)
    };
    let mut loglik = method.evaluate(data, &theta_hat)?.loglik;
    evaluations += 1;
    if loglik < init_ll {
        // the search never reports a worse point than where it started
        theta_hat = init;
        loglik = init_ll;
        converged = false;
        boundary = false;
    }
    Ok(FitResult {
        theta_hat,
        loglik,
        converged,
        boundary,
        evaluations,
        method: FitMethod::of(method),
        grid_index: None,
    })
}

/// Golden section resolves a flat maximum only to about the square root of
/// the objective's rounding error; tighter tolerances refine the root of
/// the central-difference derivative instead.
const POLISH_BELOW: f64 = 1e-6;
const POLISH_STEP: f64 = 1e-5;

/// Regula falsi (Illinois variant) on the central-difference derivative
/// around `x`. Returns `x` unchanged when the derivative does not change
/// sign across the search interval.
fn polish_root(mut f: impl FnMut(f64) -> f64, x: f64, tol: f64) -> f64 {
    let mut slope = |t: f64| (f(t + POLISH_STEP) - f(t - POLISH_STEP)) / (2.0 * POLISH_STEP);
    let width = 4.0 * POLISH_BELOW;
    let (mut a, mut b) = (x - width, x + width);
    let (mut ga, mut gb) = (slope(a), slope(b));
    if !(ga > 0.0 && gb < 0.0) {
        return x;
    }
    let mut side = 0;
    for _ in 0..60 {
        let c = (a * gb - b * ga) / (gb - ga);
        let gc = slope(c);
        if gc == 0.0 || (b - a) < tol {
            return c;
        }
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    0.5 * (a + b)
}

/// Exhaustive argmax of the likelihood over a finite parameter set. Ties
/// go to the lowest grid index.
pub fn fit_finite_mle(data: &ResponseTable, grid: &[Theta], method: &LikelihoodMethod) -> Result<FitResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid("finite parameter grid is empty".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, th) in grid.iter().enumerate() {
        let ll = method.evaluate(data, th)?.loglik;
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((k, ll));
        }
    }
    let (index, loglik) = best.expect("grid is nonempty");
    Ok(FitResult {
        theta_hat: grid[index],
        loglik,
        converged: true,
        boundary: false,
        evaluations: grid.len(),
        method: FitMethod::FiniteGrid,
        grid_index: Some(index),
    })
}

//! Monte Carlo studies over a ladder of design sizes.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;

use super::{derive_seed, mix64, simulate, DesignRule};
use crate::error::{Error, Result};
use crate::estimators::{fit_dc_mle, fit_finite_mle, fit_full_mle, fit_subset_mle, CloneConfig, FitOptions, FitResult};
use crate::likelihood::LikelihoodMethod;
use crate::model::{logit, ResponseTable, Theta, PARAM_NAMES};
use crate::quadrature::{DEFAULT_ORDER, TENSOR_CAP};

pub const STUDY_HEADER: [&str; 10] =
    ["m", "n", "rep", "estimator", "parameter", "estimate", "abs_error", "status", "runtime_ms", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Subset,
    FullQuadrature,
    FullMc,
    Dc,
    FiniteGrid,
}

impl EstimatorKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorKind::Subset => "subset",
            EstimatorKind::FullQuadrature => "full_quadrature",
            EstimatorKind::FullMc => "full_mc",
            EstimatorKind::Dc => "dc",
            EstimatorKind::FiniteGrid => "finite_grid",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        [Self::Subset, Self::FullQuadrature, Self::FullMc, Self::Dc, Self::FiniteGrid]
            .into_iter()
            .find(|k| k.tag() == text)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{text}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub sizes: Vec<(usize, usize)>,
    pub replications: usize,
    /// True parameter; its mask marks what the estimators fit.
    pub theta0: Theta,
    pub estimators: Vec<EstimatorKind>,
    pub base_seed: u64,
    pub design_rule: DesignRule,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Quadrature order for exact likelihoods and subset functions.
    pub order: usize,
    pub mc_draws: usize,
    pub mc_order: usize,
    pub dc_k: usize,
    pub dc_b: usize,
    pub dc_burn_in: usize,
    pub dc_order: usize,
    /// μ offsets from θ0 forming the finite parameter set.
    pub finite_shifts: Vec<f64>,
    /// Record wall-clock runtimes; off keeps output byte-reproducible.
    pub timing: bool,
}

impl StudyConfig {
    pub fn new(sizes: Vec<(usize, usize)>, replications: usize, theta0: Theta, estimators: Vec<EstimatorKind>) -> Self {
        Self {
            sizes,
            replications,
            theta0,
            estimators,
            base_seed: 0,
            design_rule: DesignRule::FullCrossing,
            threads: 1,
            order: DEFAULT_ORDER,
            mc_draws: 500,
            mc_order: 20,
            dc_k: 16,
            dc_b: 1000,
            dc_burn_in: 500,
            dc_order: 12,
            finite_shifts: vec![-1.0, 0.0, 1.0],
            timing: false,
        }
    }

    /// Default ladder for the μ consistency study.
    pub const DEFAULT_SIZES: [(usize, usize); 3] = [(5, 5), (10, 10), (20, 20)];

    pub fn from_config(cfg: &super::Config) -> Result<Self> {
        let theta0 = cfg.theta_or("theta0", "free", Theta::mu_only(0.5, 1.0, 1.0)?)?;
        let estimators = cfg
            .list("estimators")
            .unwrap_or_else(|| vec!["subset".into(), "full_mc".into()])
            .iter()
            .map(|s| EstimatorKind::parse(s))
            .collect::<Result<_>>()?;
        let mut out = Self::new(
            cfg.sizes_or("sizes", &Self::DEFAULT_SIZES)?,
            cfg.usize_or("reps", 200)?,
            theta0,
            estimators,
        );
        out.base_seed = cfg.u64_or("seed", 0)?;
        out.design_rule = DesignRule::parse(cfg.str_or("design", "full_crossing"))?;
        out.threads = cfg.usize_or("threads", 1)?;
        out.order = cfg.usize_or("order", out.order)?;
        out.mc_draws = cfg.usize_or("mc_draws", out.mc_draws)?;
        out.mc_order = cfg.usize_or("mc_order", out.mc_order)?;
        out.dc_k = cfg.usize_or("K", out.dc_k)?;
        out.dc_b = cfg.usize_or("B", out.dc_b)?;
        out.dc_burn_in = cfg.usize_or("burn_in", out.dc_burn_in)?;
        out.dc_order = cfg.usize_or("dc_order", out.dc_order)?;
        out.finite_shifts = cfg.f64_list_or("finite_shifts", &out.finite_shifts)?;
        out.timing = cfg.bool_or("timing", false)?;
        out.validate()?;
        Ok(out)
    }

    pub const KEYS: [&'static str; 18] = [
        "sizes", "reps", "theta0", "free", "estimators", "seed", "design", "threads", "order", "mc_draws", "mc_order", "K",
        "B", "burn_in", "dc_order", "finite_shifts", "timing", "out",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.replications == 0 || self.estimators.is_empty() {
            return Err(Error::Config("study needs sizes, at least one replication and an estimator".into()));
        }
        if self.theta0.free.count() == 0 {
            return Err(Error::Config("study needs at least one free parameter".into()));
        }
        for &(m, n) in &self.sizes {
            self.design_rule.build(m, n).map_err(|e| Error::Config(e.to_string()))?;
            let exact_points = |order: usize| (order as f64).powi(m.min(n) as i32);
            for kind in &self.estimators {
                let (needs_exact, order) = match kind {
                    EstimatorKind::FullQuadrature => (true, self.order),
                    EstimatorKind::Dc => (true, self.dc_order),
                    _ => (false, 0),
                };
                if needs_exact && exact_points(order) > TENSOR_CAP {
                    return Err(Error::Config(format!(
                        "{} at {m}x{n} needs {order}^{} quadrature points, above the cap {TENSOR_CAP}",
                        kind.tag(),
                        m.min(n)
                    )));
                }
            }
        }
        if self.estimators.contains(&EstimatorKind::FiniteGrid) && self.finite_shifts.is_empty() {
            return Err(Error::Config("finite_grid needs finite_shifts".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub n: usize,
    pub rep: usize,
    pub estimator: String,
    pub parameter: String,
    pub estimate: f64,
    pub abs_error: f64,
    /// `ok`, `boundary`, `not_converged` or `failed`.
    pub status: String,
    pub runtime_ms: u64,
    pub seed: u64,
}

fn fit_status(fit: &FitResult) -> &'static str {
    if fit.boundary {
        "boundary"
    } else if !fit.converged {
        "not_converged"
    } else {
        "ok"
    }
}

/// Start for the full-data fits when the subset estimator has no finite
/// solution: the naive logit of the overall mean.
fn fallback_init(data: &ResponseTable, template: &Theta) -> Theta {
    Theta { mu: logit(data.mean().clamp(0.01, 0.99)), ..*template }
}

fn run_estimator(cfg: &StudyConfig, kind: EstimatorKind, data: &ResponseTable, seed: u64) -> Result<(Theta, &'static str)> {
    let template = &cfg.theta0;
    let init = || fit_subset_mle(data, template, cfg.order).map(|r| r.theta_hat).unwrap_or_else(|_| fallback_init(data, template));
    match kind {
        EstimatorKind::Subset => fit_subset_mle(data, template, cfg.order).map(|f| (f.theta_hat, fit_status(&f))),
        EstimatorKind::FullQuadrature | EstimatorKind::FullMc => {
            let method = if kind == EstimatorKind::FullQuadrature {
                LikelihoodMethod::Exact { order: cfg.order }
            } else {
                LikelihoodMethod::MonteCarlo { draws: cfg.mc_draws, seed: mix64(seed ^ 1), order: cfg.mc_order }
            };
            let opts = FitOptions { init: Some(init()), ..FitOptions::default() };
            fit_full_mle(data, template, &method, &opts).map(|f| (f.theta_hat, fit_status(&f)))
        }
        EstimatorKind::FiniteGrid => {
            let grid: Vec<Theta> = cfg.finite_shifts.iter().map(|s| Theta { mu: template.mu + s, ..*template }).collect();
            // One seed for every grid point: the comparison uses common random numbers.
            let d = data.design();
            let method = if (cfg.order as f64).powi(d.m().min(d.n()) as i32) <= TENSOR_CAP {
                LikelihoodMethod::Exact { order: cfg.order }
            } else {
                LikelihoodMethod::ImportanceSampling { draws: cfg.mc_draws, seed: mix64(seed ^ 1), order: cfg.mc_order }
            };
            fit_finite_mle(data, &grid, &method).map(|f| (f.theta_hat, "ok"))
        }
        EstimatorKind::Dc => {
            let mut clone = CloneConfig::new(cfg.dc_k, cfg.dc_b, mix64(seed ^ 2));
            clone.burn_in = cfg.dc_burn_in;
            clone.order = cfg.dc_order;
            let r = fit_dc_mle(data, template, &clone)?;
            Ok((r.posterior_mean, if r.chain_summary.warning.is_some() { "not_converged" } else { "ok" }))
        }
    }
}

fn replication_rows(cfg: &StudyConfig, m: usize, n: usize, rep: usize) -> Vec<StudyRow> {
    let seed = derive_seed(cfg.base_seed, m, n, rep);
    let free = cfg.theta0.free_indices();
    let data = simulate(cfg.design_rule, m, n, &cfg.theta0, seed);
    let mut rows = Vec::new();
    for &kind in &cfg.estimators {
        let start = Instant::now();
        let outcome = match &data {
            Ok(d) => run_estimator(cfg, kind, d, seed),
            Err(e) => Err(Error::InvalidData(e.to_string())),
        };
        let runtime_ms = if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 };
        for &i in &free {
            let truth = cfg.theta0.values()[i];
            let (estimate, status) = match &outcome {
                Ok((th, status)) => (th.values()[i], *status),
                Err(_) => (f64::NAN, "failed"),
            };
            rows.push(StudyRow {
                m,
                n,
                rep,
                estimator: kind.tag().to_string(),
                parameter: PARAM_NAMES[i].to_string(),
                estimate,
                abs_error: (estimate - truth).abs(),
                status: status.to_string(),
                runtime_ms,
                seed,
            });
        }
    }
    rows
}

/// Runs every (size, replication) on a private seed and returns rows in
/// (size, rep, estimator, parameter) order regardless of scheduling.
/// Estimator failures become `failed` rows.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&(m, n)| (0..cfg.replications).map(move |rep| (m, n, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let chunks: Vec<Vec<StudyRow>> =
        pool.install(|| jobs.par_iter().map(|&(m, n, rep)| replication_rows(cfg, m, n, rep)).collect());
    Ok(chunks.into_iter().flatten().collect())
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STUDY_HEADER)?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.rep.to_string(),
            r.estimator.clone(),
            r.parameter.clone(),
            r.estimate.to_string(),
            r.abs_error.to_string(),
            r.status.clone(),
            r.runtime_ms.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_study_csv<R: Read>(input: R) -> Result<Vec<StudyRow>> {
    let mut reader = csv::Reader::from_reader(input);
    if reader.headers()?.iter().collect::<Vec<_>>() != STUDY_HEADER {
        return Err(Error::InvalidData("study CSV header does not match".into()));
    }
    let bad = |what: &str| Error::InvalidData(format!("study CSV: bad {what}"));
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(StudyRow {
                m: rec[0].parse().map_err(|_| bad("m"))?,
                n: rec[1].parse().map_err(|_| bad("n"))?,
                rep: rec[2].parse().map_err(|_| bad("rep"))?,
                estimator: rec[3].to_string(),
                parameter: rec[4].to_string(),
                estimate: rec[5].parse().map_err(|_| bad("estimate"))?,
                abs_error: rec[6].parse().map_err(|_| bad("abs_error"))?,
                status: rec[7].to_string(),
                runtime_ms: rec[8].parse().map_err(|_| bad("runtime_ms"))?,
                seed: rec[9].parse().map_err(|_| bad("seed"))?,
            })
        })
        .collect()
}

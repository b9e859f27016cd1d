//! The balanced linear model y_ij = μ + u_i + v_j + e_ij with unit
//! variances, whose MLE of μ is the grand mean. Its variance is
//! 1/m + 1/n + 1/(mn), so with m fixed it stays above 1/m however large n
//! grows.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;

use super::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LimitingConfig {
    /// Fixed row count; `None` grows rows with columns (m = n).
    pub m: Option<usize>,
    pub n_ladder: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitingRow {
    pub m: usize,
    pub n: usize,
    pub replications: usize,
    pub empirical_var: f64,
    pub analytic_var: f64,
}

impl LimitingRow {
    pub fn ratio(&self) -> f64 {
        self.empirical_var / self.analytic_var
    }
}

/// Grand mean of one simulated table. The error terms are summed directly,
/// without storing the table.
fn grand_mean(m: usize, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || rng.sample::<f64, _>(StandardNormal);
    let u: f64 = (0..m).map(|_| z()).sum::<f64>() / m as f64;
    let v: f64 = (0..n).map(|_| z()).sum::<f64>() / n as f64;
    let e: f64 = (0..m * n).map(|_| z()).sum::<f64>() / (m * n) as f64;
    u + v + e
}

pub fn limiting_demo(cfg: &LimitingConfig) -> Result<Vec<LimitingRow>> {
    if cfg.m == Some(0) || cfg.n_ladder.is_empty() || cfg.n_ladder.contains(&0) {
        return Err(Error::Config("limiting demo needs m >= 1 and a nonempty ladder of positive n".into()));
    }
    if cfg.replications < 2 {
        return Err(Error::Config("limiting demo needs at least 2 replications".into()));
    }
    Ok(cfg
        .n_ladder
        .iter()
        .map(|&n| {
            let m = cfg.m.unwrap_or(n);
            let means: Vec<f64> = (0..cfg.replications).map(|rep| grand_mean(m, n, derive_seed(cfg.seed, m, n, rep))).collect();
            let r = means.len() as f64;
            let avg = means.iter().sum::<f64>() / r;
            let empirical_var = means.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / (r - 1.0);
            let (mf, nf) = (m as f64, n as f64);
            LimitingRow {
                m,
                n,
                replications: cfg.replications,
                empirical_var,
                analytic_var: 1.0 / mf + 1.0 / nf + 1.0 / (mf * nf),
            }
        })
        .collect())
}

pub fn write_limiting_csv<W: Write>(rows: &[LimitingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "n", "replications", "empirical_var", "analytic_var", "ratio"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.replications.to_string(),
            r.empirical_var.to_string(),
            r.analytic_var.to_string(),
            r.ratio().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

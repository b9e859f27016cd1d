//! Seeded simulation, consistency studies and the linear-model limiting
//! demo.
//!
//! # Seed derivation
//!
//! Every replication owns a seed computed from its coordinates only:
//!
//! ```text
//! mix64(z):  z = z + 0x9E3779B97F4A7C15            (wrapping)
//!            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!            return z ^ (z >> 31)
//! seed(base, m, n, rep) = mix64(mix64(mix64(mix64(base) ^ m) ^ n) ^ rep)
//! ```
//!
//! all in wrapping 64-bit unsigned arithmetic. The simulated table uses
//! `seed` itself; Monte Carlo likelihoods use `mix64(seed ^ 1)` and data
//! cloning chains `mix64(seed ^ 2)`.

mod config;
mod limiting;
mod study;

pub use config::{parse_triple, Config};
pub use limiting::{limiting_demo, write_limiting_csv, LimitingConfig, LimitingRow};
pub use study::{read_study_csv, run_study, write_study_csv, EstimatorKind, StudyConfig, StudyRow, STUDY_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{logistic, CrossedDesign, ResponseTable, Theta};

/// SplitMix64 finalizer.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, m: usize, n: usize, rep: usize) -> u64 {
    mix64(mix64(mix64(mix64(base) ^ m as u64) ^ n as u64) ^ rep as u64)
}

/// How cells and replicate counts are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignRule {
    /// Every cell observed once.
    FullCrossing,
    /// Every cell observed, twice on the diagonal.
    SalamanderStyle,
}

impl DesignRule {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "full_crossing" => Ok(DesignRule::FullCrossing),
            "salamander_style" => Ok(DesignRule::SalamanderStyle),
            other => Err(Error::Config(format!(
                "unknown design `{other}`; expected full_crossing or salamander_style"
            ))),
        }
    }

    pub fn build(&self, m: usize, n: usize) -> Result<CrossedDesign> {
        match self {
            DesignRule::FullCrossing => CrossedDesign::full_crossing(m, n, 1),
            DesignRule::SalamanderStyle => CrossedDesign::salamander_style(m, n),
        }
    }
}

/// Draws u (rows, in order), then v (columns), then one uniform per
/// observation in flat order. Deterministic given `seed`.
pub fn simulate_design(design: &CrossedDesign, theta0: &Theta, seed: u64) -> Result<ResponseTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sd_u, sd_v) = (theta0.sigma2.sqrt(), theta0.tau2.sqrt());
    let u: Vec<f64> = (0..design.m()).map(|_| sd_u * rng.sample::<f64, _>(StandardNormal)).collect();
    let v: Vec<f64> = (0..design.n()).map(|_| sd_v * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut y = Vec::with_capacity(design.total());
    for cell in design.cells() {
        let p = logistic(theta0.mu + u[cell.row] + v[cell.col]);
        for _ in 0..cell.replicates {
            y.push((rng.random::<f64>() < p) as u8);
        }
    }
    ResponseTable::new(design.clone(), y)
}

pub fn simulate(rule: DesignRule, m: usize, n: usize, theta0: &Theta, seed: u64) -> Result<ResponseTable> {
    simulate_design(&rule.build(m, n)?, theta0, seed)
}

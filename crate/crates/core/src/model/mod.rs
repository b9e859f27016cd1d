//! Domain types for the mixed logistic model with two crossed random-effect
//! factors: rows carry `u_i ~ N(0, sigma2)`, columns carry `v_j ~ N(0, tau2)`,
//! and each replicate `y_ijk` is Bernoulli with `logit p = mu + u_i + v_j`.
//!
//! Indices are zero-based throughout the library. The CSV format in [`io`]
//! is one-based.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

pub mod io;

/// Box used by every optimizer and sampler for `mu`.
pub const MU_BOUNDS: (f64, f64) = (-10.0, 10.0);
/// Box used by every optimizer and sampler for `sigma2` and `tau2`.
pub const VAR_BOUNDS: (f64, f64) = (1e-6, 25.0);

/// h(x) = e^x / (1 + e^x), evaluated without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log h(x).
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// log(1 - h(x)).
#[inline]
pub fn log1m_logistic(x: f64) -> f64 {
    log_logistic(-x)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// P(y | u_i, v_j) for a single binary response.
pub fn conditional_mass(y: u8, mu: f64, u: f64, v: f64) -> f64 {
    let eta = mu + u + v;
    if y == 1 {
        logistic(eta)
    } else {
        logistic(-eta)
    }
}

/// Replicate count of a single cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub replicates: usize,
}

/// The index set S with replicate counts `c_ij`.
///
/// Cells are kept sorted by `(row, col)`; that order also fixes the flat
/// observation order used by [`ResponseTable`] and by outcome enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossedDesign {
    m: usize,
    n: usize,
    cells: Vec<Cell>,
    offsets: Vec<usize>,
    lookup: BTreeMap<(usize, usize), usize>,
}

impl CrossedDesign {
    /// Builds a design from `((row, col), replicates)` entries. Every row in
    /// `0..m` and column in `0..n` must appear in at least one cell.
    pub fn new(
        m: usize,
        n: usize,
        cells: impl IntoIterator<Item = ((usize, usize), usize)>,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidDesign(format!("dimensions {m}x{n} must be positive")));
        }
        let mut lookup_counts = BTreeMap::new();
        for ((i, j), c) in cells {
            if i >= m || j >= n {
                return Err(Error::InvalidDesign(format!("cell ({i},{j}) outside {m}x{n}")));
            }
            if c == 0 {
                return Err(Error::InvalidDesign(format!("cell ({i},{j}) has zero replicates")));
            }
            if lookup_counts.insert((i, j), c).is_some() {
                return Err(Error::InvalidDesign(format!("duplicate cell ({i},{j})")));
            }
        }
        let mut row_seen = vec![false; m];
        let mut col_seen = vec![false; n];
        for &(i, j) in lookup_counts.keys() {
            row_seen[i] = true;
            col_seen[j] = true;
        }
        if let Some(i) = row_seen.iter().position(|s| !s) {
            return Err(Error::InvalidDesign(format!("row {i} has no cells (design not irreducible)")));
        }
        if let Some(j) = col_seen.iter().position(|s| !s) {
            return Err(Error::InvalidDesign(format!("column {j} has no cells (design not irreducible)")));
        }

        let mut cells = Vec::with_capacity(lookup_counts.len());
        let mut offsets = Vec::with_capacity(lookup_counts.len() + 1);
        let mut lookup = BTreeMap::new();
        let mut offset = 0;
        for (idx, (&(row, col), &replicates)) in lookup_counts.iter().enumerate() {
            cells.push(Cell { row, col, replicates });
            offsets.push(offset);
            lookup.insert((row, col), idx);
            offset += replicates;
        }
        offsets.push(offset);
        Ok(Self { m, n, cells, offsets, lookup })
    }

    /// Every (i, j) present with `c` replicates.
    pub fn full_crossing(m: usize, n: usize, c: usize) -> Result<Self> {
        Self::new(m, n, (0..m).flat_map(|i| (0..n).map(move |j| ((i, j), c))))
    }

    /// Full crossing with two replicates on the diagonal cells and one
    /// elsewhere, the replicate structure of the salamander experiments.
    pub fn salamander_style(m: usize, n: usize) -> Result<Self> {
        Self::new(
            m,
            n,
            (0..m).flat_map(|i| (0..n).map(move |j| ((i, j), if i == j { 2 } else { 1 }))),
        )
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn replicates(&self, row: usize, col: usize) -> Option<usize> {
        self.lookup.get(&(row, col)).map(|&idx| self.cells[idx].replicates)
    }

    pub fn cell_index(&self, row: usize, col: usize) -> Option<usize> {
        self.lookup.get(&(row, col)).copied()
    }

    /// Flat observation index of replicate `k` in `(row, col)`.
    pub fn observation_index(&self, row: usize, col: usize, k: usize) -> Option<usize> {
        let idx = self.cell_index(row, col)?;
        (k < self.cells[idx].replicates).then(|| self.offsets[idx] + k)
    }

    /// Total number of observations N.
    pub fn total(&self) -> usize {
        self.offsets[self.cells.len()]
    }

    pub(crate) fn offset(&self, cell_idx: usize) -> usize {
        self.offsets[cell_idx]
    }

    /// Full crossing with a constant replicate count. Such designs are
    /// invariant under row and column permutations.
    pub fn is_exchangeable(&self) -> bool {
        self.cells.len() == self.m * self.n
            && self.cells.windows(2).all(|w| w[0].replicates == w[1].replicates)
    }

    pub fn transpose(&self) -> Self {
        Self::new(
            self.n,
            self.m,
            self.cells.iter().map(|c| ((c.col, c.row), c.replicates)),
        )
        .expect("transpose of a valid design is valid")
    }
}

/// Which of the model parameters are estimated; the rest are known constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeMask {
    pub mu: bool,
    pub sigma2: bool,
    pub tau2: bool,
}

impl FreeMask {
    pub const ALL: FreeMask = FreeMask { mu: true, sigma2: true, tau2: true };
    pub const MU_ONLY: FreeMask = FreeMask { mu: true, sigma2: false, tau2: false };

    pub fn as_array(&self) -> [bool; 3] {
        [self.mu, self.sigma2, self.tau2]
    }

    pub fn count(&self) -> usize {
        self.as_array().iter().filter(|&&f| f).count()
    }
}

/// Parameter names in canonical order.
pub const PARAM_NAMES: [&str; 3] = ["mu", "sigma2", "tau2"];

/// θ = (μ, σ², τ²) with a free/known mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub mu: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub free: FreeMask,
}

impl Theta {
    pub fn new(mu: f64, sigma2: f64, tau2: f64) -> Result<Self> {
        Self::with_mask(mu, sigma2, tau2, FreeMask::ALL)
    }

    pub fn with_mask(mu: f64, sigma2: f64, tau2: f64, free: FreeMask) -> Result<Self> {
        if !mu.is_finite() || !sigma2.is_finite() || !tau2.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite theta ({mu}, {sigma2}, {tau2})")));
        }
        if sigma2 < 0.0 || tau2 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "variances must be nonnegative, got sigma2={sigma2}, tau2={tau2}"
            )));
        }
        Ok(Self { mu, sigma2, tau2, free })
    }

    /// The open-problem parametrization: only μ unknown.
    pub fn mu_only(mu: f64, sigma2: f64, tau2: f64) -> Result<Self> {
        Self::with_mask(mu, sigma2, tau2, FreeMask::MU_ONLY)
    }

    pub fn psi2(&self) -> f64 {
        self.sigma2 + self.tau2
    }

    /// σ²/ψ², undefined when both variances vanish.
    pub fn gamma(&self) -> Option<f64> {
        let psi2 = self.psi2();
        (psi2 > 0.0).then(|| self.sigma2 / psi2)
    }

    pub fn values(&self) -> [f64; 3] {
        [self.mu, self.sigma2, self.tau2]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        match index {
            0 => self.mu = value,
            1 => self.sigma2 = value,
            2 => self.tau2 = value,
            _ => panic!("theta has three components"),
        }
    }

    pub fn free_indices(&self) -> Vec<usize> {
        self.free.as_array().iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        self.free_indices().into_iter().map(|i| PARAM_NAMES[i]).collect()
    }

    /// Free parameters on the working scale: μ as is, variances as logs.
    pub fn to_working(&self) -> Vec<f64> {
        self.free_indices()
            .into_iter()
            .map(|i| if i == 0 { self.mu } else { self.values()[i].ln() })
            .collect()
    }

    /// Inverse of [`Theta::to_working`]; known components are copied from `self`.
    pub fn from_working(&self, working: &[f64]) -> Theta {
        let mut out = *self;
        for (&i, &w) in self.free_indices().iter().zip(working) {
            out.set(i, if i == 0 { w } else { w.exp() });
        }
        out
    }

    /// Whether every free component lies inside the optimization box.
    pub fn in_box(&self) -> bool {
        self.free_indices().into_iter().all(|i| {
            let v = self.values()[i];
            let (lo, hi) = if i == 0 { MU_BOUNDS } else { VAR_BOUNDS };
            (lo..=hi).contains(&v)
        })
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.mu, self.sigma2, self.tau2)
    }
}

/// Binary responses over a design, stored densely per cell and replicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseTable {
    design: CrossedDesign,
    y: Vec<u8>,
}

impl ResponseTable {
    /// `y` is laid out in the design's flat observation order.
    pub fn new(design: CrossedDesign, y: Vec<u8>) -> Result<Self> {
        if y.len() != design.total() {
            return Err(Error::InvalidData(format!(
                "expected {} observations, got {}",
                design.total(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidData(format!("non-binary response {bad}")));
        }
        Ok(Self { design, y })
    }

    pub fn from_fn(design: CrossedDesign, mut f: impl FnMut(usize, usize, usize) -> u8) -> Result<Self> {
        let mut y = Vec::with_capacity(design.total());
        for cell in design.cells() {
            for k in 0..cell.replicates {
                y.push(f(cell.row, cell.col, k));
            }
        }
        Self::new(design, y)
    }

    /// Outcome number `bits` of the design, bit `t` holding observation `t`.
    pub fn from_bits(design: CrossedDesign, bits: u64) -> Self {
        let y = (0..design.total()).map(|t| ((bits >> t) & 1) as u8).collect();
        Self { design, y }
    }

    pub fn design(&self) -> &CrossedDesign {
        &self.design
    }

    pub fn values(&self) -> &[u8] {
        &self.y
    }

    pub fn get(&self, row: usize, col: usize, k: usize) -> Option<u8> {
        self.design.observation_index(row, col, k).map(|t| self.y[t])
    }

    /// Replicates of cell `cell_idx`.
    pub fn cell_values(&self, cell_idx: usize) -> &[u8] {
        let start = self.design.offset(cell_idx);
        &self.y[start..start + self.design.cells()[cell_idx].replicates]
    }

    /// Number of ones in a cell.
    pub fn successes(&self, cell_idx: usize) -> usize {
        self.cell_values(cell_idx).iter().map(|&v| v as usize).sum()
    }

    pub fn mean(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.y.len() as f64
    }

    /// `(row, col, k, y)` in flat order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, u8)> + '_ {
        self.design.cells().iter().enumerate().flat_map(move |(idx, cell)| {
            self.cell_values(idx).iter().enumerate().map(move |(k, &v)| (cell.row, cell.col, k, v))
        })
    }

    pub fn transpose(&self) -> Self {
        let t = self.design.transpose();
        Self::from_fn(t, |i, j, k| self.get(j, i, k).expect("cell present"))
            .expect("transpose of a valid table is valid")
    }
}

/// Realized row and column effects.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffects {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn normal_logpdf(x: f64, var: f64) -> Result<f64> {
    if var == 0.0 {
        return if x == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::DegenerateDensity { value: x })
        };
    }
    Ok(-0.5 * (2.0 * PI * var).ln() - 0.5 * x * x / var)
}

/// Log of the joint density of responses and random effects.
pub fn complete_data_loglik(data: &ResponseTable, theta: &Theta, effects: &RandomEffects) -> Result<f64> {
    let design = data.design();
    if effects.u.len() != design.m() || effects.v.len() != design.n() {
        return Err(Error::InvalidData(format!(
            "effects of length ({}, {}) for a {}x{} design",
            effects.u.len(),
            effects.v.len(),
            design.m(),
            design.n()
        )));
    }
    if theta.sigma2 == 0.0 || theta.tau2 == 0.0 {
        let offending = effects
            .u
            .iter()
            .filter(|_| theta.sigma2 == 0.0)
            .chain(effects.v.iter().filter(|_| theta.tau2 == 0.0))
            .find(|&&x| x != 0.0);
        if let Some(&value) = offending {
            return Err(Error::DegenerateDensity { value });
        }
        return Err(Error::InvalidParameter(
            "complete-data density requires positive variances".into(),
        ));
    }
    let mut total = 0.0;
    for (i, j, _, y) in data.iter() {
        let eta = theta.mu + effects.u[i] + effects.v[j];
        total += if y == 1 { log_logistic(eta) } else { log1m_logistic(eta) };
    }
    for &u in &effects.u {
        total += normal_logpdf(u, theta.sigma2)?;
    }
    for &v in &effects.v {
        total += normal_logpdf(v, theta.tau2)?;
    }
    Ok(total)
}

/// The independent subsets used to identify the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubsetKind {
    /// `y_ii1`, i < min(m, n): i.i.d. Bernoulli(p0(mu, psi2)).
    Diagonal,
    /// Both replicates of each diagonal cell with `c_ii = 2`.
    ReplicatePairDiagonal,
    /// `(y_{i,2i}, y_{i,2i+1})` in zero-based columns, first replicates.
    OffDiagonalPair,
}

/// A resolved subset: each element lists the flat observation indices it
/// contains. Distinct elements share no random effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSpec {
    pub kind: SubsetKind,
    pub elements: Vec<Vec<usize>>,
}

impl SubsetSpec {
    pub fn resolve(design: &CrossedDesign, kind: SubsetKind) -> Self {
        let k = design.m().min(design.n());
        let elements: Vec<Vec<usize>> = match kind {
            SubsetKind::Diagonal => (0..k)
                .filter_map(|i| design.observation_index(i, i, 0).map(|t| vec![t]))
                .collect(),
            SubsetKind::ReplicatePairDiagonal => (0..k)
                .filter(|&i| design.replicates(i, i) == Some(2))
                .map(|i| vec![design.observation_index(i, i, 0).unwrap(), design.observation_index(i, i, 1).unwrap()])
                .collect(),
            SubsetKind::OffDiagonalPair => (0..design.m())
                .filter_map(|i| {
                    let a = design.observation_index(i, 2 * i, 0)?;
                    let b = design.observation_index(i, 2 * i + 1, 0)?;
                    Some(vec![a, b])
                })
                .collect(),
        };
        Self { kind, elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// All observation indices in element order.
    pub fn observations(&self) -> Vec<usize> {
        self.elements.iter().flatten().copied().collect()
    }

    /// Bit mask over flat observation indices.
    pub fn mask(&self) -> u64 {
        self.observations().iter().fold(0u64, |acc, &t| acc | (1u64 << t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi0() -> f64 {
        -0.5 * (2.0 * PI).ln()
    }

    #[test]
    fn logistic_basics() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3.7) - (1.0 - logistic(-3.7))).abs() < 1e-15);
        let big = logistic(40.0);
        assert!(1.0 - big < 1e-17 && big <= 1.0);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) == 1.0);
    }

    #[test]
    fn logit_inverts_logistic() {
        // For x > 0 the rounding of p near 1 is amplified by 1/(1-p).
        for k in -300..=300 {
            let x = k as f64 / 10.0;
            let p = logistic(x);
            let tol = 1e-12 + 4.0 * f64::EPSILON / (1.0 - p).max(f64::MIN_POSITIVE);
            assert!((logit(p) - x).abs() <= tol, "x={x}");
        }
    }

    #[test]
    fn logistic_strictly_increasing() {
        let xs: Vec<f64> = (-200..=200).map(|k| k as f64 / 10.0).collect();
        assert!(xs.windows(2).all(|w| logistic(w[0]) < logistic(w[1])));
    }

    #[test]
    fn log_logistic_matches_direct_form() {
        for &x in &[-50.0, -3.0, -0.1, 0.0, 0.2, 4.0, 45.0] {
            assert!((log_logistic(x) - logistic(x).ln()).abs() < 1e-12);
            assert!((log1m_logistic(x) - logistic(-x).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_mass_examples() {
        assert_eq!(conditional_mass(1, 0.0, 0.0, 0.0), 0.5);
        let (mu, u, v) = (0.3, -1.2, 0.7);
        assert!((conditional_mass(0, mu, u, v) - (1.0 - conditional_mass(1, mu, u, v))).abs() < 1e-15);
        assert_eq!(conditional_mass(1, 1.0, 0.5, -0.5), logistic(1.0));
    }

    #[test]
    fn complete_data_closed_forms() {
        let d = CrossedDesign::full_crossing(1, 1, 1).unwrap();
        let data = ResponseTable::new(d, vec![1]).unwrap();
        let th = Theta::new(0.0, 1.0, 1.0).unwrap();
        let eff = RandomEffects { u: vec![0.0], v: vec![0.0] };
        let got = complete_data_loglik(&data, &th, &eff).unwrap();
        assert!((got - (0.5f64.ln() + 2.0 * phi0())).abs() < 1e-14);

        let d = CrossedDesign::full_crossing(2, 2, 1).unwrap();
        let data = ResponseTable::new(d, vec![1; 4]).unwrap();
        let eff = RandomEffects { u: vec![0.0; 2], v: vec![0.0; 2] };
        let got = complete_data_loglik(&data, &th, &eff).unwrap();
        assert!((got - (4.0 * 0.5f64.ln() + 4.0 * phi0())).abs() < 1e-13);
    }

    #[test]
    fn complete_data_decreases_in_effect_size() {
        let d = CrossedDesign::full_crossing(1, 1, 1).unwrap();
        let data = ResponseTable::new(d, vec![0]).unwrap();
        let th = Theta::new(0.0, 1.0, 1.0).unwrap();
        let at = |u: f64| complete_data_loglik(&data, &th, &RandomEffects { u: vec![u], v: vec![0.0] }).unwrap();
        assert!(at(0.0) > at(1.0) && at(1.0) > at(2.0) && at(2.0) > at(4.0));
    }

    #[test]
    fn complete_data_rejects_zero_variance() {
        let d = CrossedDesign::full_crossing(1, 1, 1).unwrap();
        let data = ResponseTable::new(d, vec![0]).unwrap();
        let th = Theta::new(0.0, 0.0, 1.0).unwrap();
        let err = complete_data_loglik(&data, &th, &RandomEffects { u: vec![0.3], v: vec![0.0] });
        assert!(matches!(err, Err(Error::DegenerateDensity { .. })));
        assert!(complete_data_loglik(&data, &th, &RandomEffects { u: vec![0.0], v: vec![0.0] }).is_err());
    }

    #[test]
    fn design_validation() {
        assert!(CrossedDesign::new(2, 2, [((0, 0), 1), ((1, 1), 1)]).is_ok());
        assert!(CrossedDesign::new(2, 2, [((0, 0), 1), ((0, 1), 1)]).is_err());
        assert!(CrossedDesign::new(1, 1, [((0, 0), 0)]).is_err());
        assert!(CrossedDesign::new(1, 1, [((0, 1), 1)]).is_err());
        let d = CrossedDesign::salamander_style(3, 3).unwrap();
        assert_eq!(d.total(), 12);
        assert_eq!(d.replicates(1, 1), Some(2));
        assert_eq!(d.observation_index(0, 1, 0), Some(2));
    }

    #[test]
    fn subsets_resolve() {
        let d = CrossedDesign::full_crossing(4, 6, 1).unwrap();
        assert_eq!(SubsetSpec::resolve(&d, SubsetKind::Diagonal).len(), 4);
        assert!(SubsetSpec::resolve(&d, SubsetKind::ReplicatePairDiagonal).is_empty());
        assert_eq!(SubsetSpec::resolve(&d, SubsetKind::OffDiagonalPair).len(), 3);

        let d = CrossedDesign::salamander_style(6, 6).unwrap();
        let pairs = SubsetSpec::resolve(&d, SubsetKind::ReplicatePairDiagonal);
        assert_eq!(pairs.len(), 6);
        assert_eq!(pairs.elements[0], vec![0, 1]);
    }

    #[test]
    fn working_scale_round_trip() {
        let th = Theta::new(0.4, 1.5, 0.25).unwrap();
        let w = th.to_working();
        assert_eq!(w.len(), 3);
        let back = th.from_working(&w);
        for (a, b) in back.values().iter().zip(th.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let only = Theta::mu_only(0.4, 1.0, 1.0).unwrap();
        assert_eq!(only.to_working(), vec![0.4]);
        assert_eq!(only.from_working(&[2.0]).sigma2, 1.0);
    }

    #[test]
    fn transpose_swaps_cells() {
        let d = CrossedDesign::new(2, 3, [((0, 0), 1), ((0, 2), 2), ((1, 1), 1)]).unwrap();
        let data = ResponseTable::new(d, vec![1, 0, 1, 0]).unwrap();
        let t = data.transpose();
        assert_eq!(t.design().m(), 3);
        assert_eq!(t.get(2, 0, 1), Some(1));
        assert_eq!(t.get(1, 1, 0), Some(0));
    }
}

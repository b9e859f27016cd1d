//! Full-data marginal likelihood.
//!
//! The likelihood factorizes over connected components of the row/column
//! incidence graph. Within a component it is evaluated as
//! `E_u[ prod_j E_{v_j}[ prod_{i in col j} prod_k f_ijk ] ]`: an outer
//! tensor rule (or Monte-Carlo draws) over the row effects and a
//! one-dimensional rule per column. Each component is oriented so the outer
//! dimension is the smaller factor.
//!
//! Underflow: per-column inner sums are log-sum-exp'd with a max shift over
//! the inner nodes, and the outer sum is accumulated as a streaming
//! log-sum-exp (running max, rescaled on each new maximum).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LikelihoodValue, Method};
use crate::error::{Error, Result};
use crate::model::{log1m_logistic, log_logistic, ResponseTable, Theta};
use crate::quadrature::{rule, QuadratureRule, TENSOR_CAP};

/// One column's entry: local row, successes, failures.
#[derive(Debug, Clone, Copy)]
pub(super) struct Entry {
    pub(super) row: usize,
    pub(super) succ: u32,
    pub(super) fail: u32,
}

/// A connected component, oriented with `rows <= cols.len()`.
#[derive(Debug, Clone)]
pub(super) struct Block {
    pub(super) rows: usize,
    pub(super) cols: Vec<Vec<Entry>>,
    pub(super) outer_var: f64,
    pub(super) inner_var: f64,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub(super) fn blocks(data: &ResponseTable, theta: &Theta) -> Vec<Block> {
    let design = data.design();
    let (m, n) = (design.m(), design.n());
    let mut parent: Vec<usize> = (0..m + n).collect();
    for cell in design.cells() {
        let a = find(&mut parent, cell.row);
        let b = find(&mut parent, m + cell.col);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let roots: Vec<usize> = (0..m + n).map(|x| find(&mut parent, x)).collect();
    let mut comp_ids: Vec<usize> = roots.clone();
    comp_ids.sort_unstable();
    comp_ids.dedup();

    comp_ids
        .iter()
        .map(|&root| {
            let rows: Vec<usize> = (0..m).filter(|&i| roots[i] == root).collect();
            let cols: Vec<usize> = (0..n).filter(|&j| roots[m + j] == root).collect();
            let transposed = rows.len() > cols.len();
            let (outer, inner) = if transposed { (&cols, &rows) } else { (&rows, &cols) };
            let mut local_outer = vec![usize::MAX; if transposed { n } else { m }];
            for (k, &g) in outer.iter().enumerate() {
                local_outer[g] = k;
            }
            let mut local_inner = vec![usize::MAX; if transposed { m } else { n }];
            for (k, &g) in inner.iter().enumerate() {
                local_inner[g] = k;
            }
            let mut block_cols = vec![Vec::new(); inner.len()];
            for (idx, cell) in design.cells().iter().enumerate() {
                if roots[cell.row] != root {
                    continue;
                }
                let (o, i) = if transposed { (cell.col, cell.row) } else { (cell.row, cell.col) };
                let succ = data.successes(idx) as u32;
                block_cols[local_inner[i]].push(Entry {
                    row: local_outer[o],
                    succ,
                    fail: cell.replicates as u32 - succ,
                });
            }
            let (outer_var, inner_var) =
                if transposed { (theta.tau2, theta.sigma2) } else { (theta.sigma2, theta.tau2) };
            Block { rows: outer.len(), cols: block_cols, outer_var, inner_var }
        })
        .collect()
}

pub(super) fn rule_for(var: f64, order: usize) -> Result<QuadratureRule> {
    if var == 0.0 {
        Ok(QuadratureRule::point_mass())
    } else {
        Ok(rule(order)?.clone())
    }
}

/// Streaming log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else if v.is_finite() {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

pub(super) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-(successes, failures) tables over (outer node, inner node).
struct Tables {
    keys: Vec<(u32, u32)>,
    log: Vec<Vec<f64>>,
    lin: Vec<Vec<f64>>,
}

struct ExactKernel<'a> {
    block: &'a Block,
    qo: usize,
    qi: usize,
    log_wo: Vec<f64>,
    log_wi: Vec<f64>,
    tables: Tables,
    /// Entries of each row: (column, table index); split by whether the
    /// column is closed at this row.
    closing: Vec<Vec<(usize, usize)>>,
    continuing: Vec<Vec<(usize, usize)>>,
}

impl<'a> ExactKernel<'a> {
    fn new(block: &'a Block, mu: f64, outer: &QuadratureRule, inner: &QuadratureRule) -> Self {
        let (qo, qi) = (outer.order(), inner.order());
        let so = block.outer_var.sqrt();
        let si = block.inner_var.sqrt();
        let mut keys: Vec<(u32, u32)> =
            block.cols.iter().flatten().map(|e| (e.succ, e.fail)).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut lh = vec![0.0; qo * qi];
        let mut l1h = vec![0.0; qo * qi];
        for a in 0..qo {
            for t in 0..qi {
                let eta = mu + so * outer.nodes[a] + si * inner.nodes[t];
                lh[a * qi + t] = log_logistic(eta);
                l1h[a * qi + t] = log1m_logistic(eta);
            }
        }
        let log: Vec<Vec<f64>> = keys
            .iter()
            .map(|&(s, f)| lh.iter().zip(&l1h).map(|(&p, &q)| s as f64 * p + f as f64 * q).collect())
            .collect();
        let lin = log.iter().map(|tab| tab.iter().map(|v| v.exp()).collect()).collect();

        let mut closing = vec![Vec::new(); block.rows];
        let mut continuing = vec![Vec::new(); block.rows];
        for (j, col) in block.cols.iter().enumerate() {
            let last = col.iter().map(|e| e.row).max().expect("columns are nonempty");
            for e in col {
                let key = keys.binary_search(&(e.succ, e.fail)).unwrap();
                if e.row == last {
                    closing[e.row].push((j, key));
                } else {
                    continuing[e.row].push((j, key));
                }
            }
        }

        Self {
            block,
            qo,
            qi,
            log_wo: outer.weights.iter().map(|w| w.ln()).collect(),
            log_wi: inner.weights.iter().map(|w| w.ln()).collect(),
            tables: Tables { keys, log, lin },
            closing,
            continuing,
        }
    }

    fn run(&self) -> (f64, usize) {
        let ncols = self.block.cols.len();
        let mut partial = vec![vec![0.0; ncols * self.qi]; self.block.rows + 1];
        let mut acc = LogSum::new();
        let mut leaves = 0;
        self.descend(0, 0.0, 0.0, &mut partial, &mut acc, &mut leaves);
        (acc.value(), leaves)
    }

    fn descend(
        &self,
        level: usize,
        closed: f64,
        log_w: f64,
        partial: &mut [Vec<f64>],
        acc: &mut LogSum,
        leaves: &mut usize,
    ) {
        let qi = self.qi;
        // Columns closing at this row: shift once per parent node, then
        // each child costs one dot product and one log.
        let shifted: Vec<(f64, Vec<f64>, usize)> = self.closing[level]
            .iter()
            .map(|&(j, key)| {
                let base: Vec<f64> =
                    (0..qi).map(|t| self.log_wi[t] + partial[level][j * qi + t]).collect();
                let max = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (max, base.iter().map(|b| (b - max).exp()).collect(), key)
            })
            .collect();
        let last = level + 1 == self.block.rows;

        for a in 0..self.qo {
            let mut closed_a = closed;
            for (max, lin, key) in &shifted {
                let tab = &self.tables.lin[*key][a * qi..(a + 1) * qi];
                let dot: f64 = lin.iter().zip(tab).map(|(x, y)| x * y).sum();
                closed_a += max + dot.ln();
            }
            let lw = log_w + self.log_wo[a];
            if last {
                acc.push(lw + closed_a);
                *leaves += 1;
            } else {
                let (head, tail) = partial.split_at_mut(level + 1);
                let next = &mut tail[0];
                next.copy_from_slice(&head[level]);
                for &(j, key) in &self.continuing[level] {
                    let tab = &self.tables.log[key][a * qi..(a + 1) * qi];
                    for (p, v) in next[j * qi..(j + 1) * qi].iter_mut().zip(tab) {
                        *p += v;
                    }
                }
                self.descend(level + 1, closed_a, lw, partial, acc, leaves);
            }
        }
        debug_assert!(self.tables.keys.len() == self.tables.log.len());
    }
}

/// Tensor points an exact evaluation would visit, per component.
pub fn exact_tensor_points(data: &ResponseTable, theta: &Theta, order: usize) -> f64 {
    blocks(data, theta)
        .iter()
        .map(|b| if b.outer_var == 0.0 { 1.0 } else { (order as f64).powi(b.rows as i32) })
        .fold(0.0, f64::max)
}

/// Log marginal probability of the whole table by structured quadrature.
pub fn marginal_loglik_exact(data: &ResponseTable, theta: &Theta, order: usize) -> Result<LikelihoodValue> {
    rule(order)?;
    let blocks = blocks(data, theta);
    for b in &blocks {
        let q = if b.outer_var == 0.0 { 1 } else { order };
        let points = (q as f64).powi(b.rows as i32);
        if points > TENSOR_CAP {
            return Err(Error::TooLarge { points, cap: TENSOR_CAP });
        }
    }
    let mut total = 0.0;
    let mut evaluations = 0;
    for b in &blocks {
        let outer = rule_for(b.outer_var, order)?;
        let inner = rule_for(b.inner_var, order)?;
        let (value, leaves) = ExactKernel::new(b, theta.mu, &outer, &inner).run();
        total += value;
        evaluations += leaves;
    }
    Ok(LikelihoodValue { loglik: total, method: Method::ExactQuadrature, mc_std_error: None, evaluations })
}

/// Log marginal probability with Monte-Carlo over the outer effects and
/// quadrature over each column effect. Draws depend only on `seed`, so
/// evaluations at different θ share random numbers.
pub fn marginal_loglik_mc(
    data: &ResponseTable,
    theta: &Theta,
    draws: usize,
    seed: u64,
    order: usize,
) -> Result<LikelihoodValue> {
    if draws < 100 {
        return Err(Error::InvalidParameter(format!("Monte-Carlo needs at least 100 draws, got {draws}")));
    }
    rule(order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut var_total = 0.0;
    let mut z: Vec<f64> = Vec::new();
    let mut values = vec![0.0; draws];
    for b in blocks(data, theta) {
        let inner = rule_for(b.inner_var, order)?;
        let qi = inner.order();
        let log_wi: Vec<f64> = inner.weights.iter().map(|w| w.ln()).collect();
        let so = b.outer_var.sqrt();
        let si = b.inner_var.sqrt();
        let mut lh = vec![0.0; b.rows * qi];
        let mut l1h = vec![0.0; b.rows * qi];
        let mut col_buf = vec![0.0; qi];
        for value in values.iter_mut() {
            z.clear();
            z.extend((0..b.rows).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            for (i, &zi) in z.iter().enumerate() {
                let base = theta.mu + so * zi;
                for t in 0..qi {
                    let eta = base + si * inner.nodes[t];
                    lh[i * qi + t] = log_logistic(eta);
                    l1h[i * qi + t] = log1m_logistic(eta);
                }
            }
            let mut sum = 0.0;
            for col in &b.cols {
                col_buf.copy_from_slice(&log_wi);
                for e in col {
                    let (s, f) = (e.succ as f64, e.fail as f64);
                    let r = e.row * qi;
                    for t in 0..qi {
                        col_buf[t] += s * lh[r + t] + f * l1h[r + t];
                    }
                }
                sum += log_sum_exp(&col_buf);
            }
            *value = sum;
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
        let mean = scaled.iter().sum::<f64>() / draws as f64;
        let var = scaled.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        total += max + mean.ln();
        // Delta method: se(log mean) = sd(mean) / mean.
        var_total += var / draws as f64 / (mean * mean);
    }
    Ok(LikelihoodValue {
        loglik: total,
        method: Method::MonteCarlo,
        mc_std_error: Some(var_total.sqrt()),
        evaluations: draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CrossedDesign, ResponseTable};

    #[test]
    fn components_split_and_orient() {
        let d = CrossedDesign::new(3, 4, [((0, 0), 1), ((0, 1), 1), ((1, 2), 2), ((2, 2), 1), ((2, 3), 1)]).unwrap();
        let data = ResponseTable::new(d, vec![1, 0, 1, 1, 0, 1]).unwrap();
        let th = Theta::new(0.0, 2.0, 3.0).unwrap();
        let bs = blocks(&data, &th);
        assert_eq!(bs.len(), 2);
        // first component: one row, two columns
        assert_eq!((bs[0].rows, bs[0].cols.len()), (1, 2));
        assert_eq!(bs[0].outer_var, 2.0);
        // second: rows {1,2} x cols {2,3}
        assert_eq!((bs[1].rows, bs[1].cols.len()), (2, 2));
        let tall = CrossedDesign::full_crossing(3, 1, 1).unwrap();
        let data = ResponseTable::new(tall, vec![1, 0, 1]).unwrap();
        let bs = blocks(&data, &th);
        assert_eq!((bs[0].rows, bs[0].cols.len(), bs[0].outer_var), (1, 3, 3.0));
    }

    #[test]
    fn log_sum_streams() {
        let xs = [-1000.0, -999.0, -1001.5, -3.0, -2.0];
        let mut acc = LogSum::new();
        xs.iter().for_each(|&x| acc.push(x));
        assert!((acc.value() - log_sum_exp(&xs)).abs() < 1e-12);
    }
}

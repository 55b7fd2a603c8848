//! Discrete entropy estimation.
//!
//! Conditional entropy `H(Y|X)` is the `p(X = a_j)`-weighted average of the
//! per-cell entropies `H(Y | X = a_j)`. Each cell is estimated with the
//! Chao-Shen coverage-adjusted estimator:
//!
//! ```text
//! p_gt(b) = (1 - m/n) * c_b / n
//! H       = -sum_b p_gt(b) log2 p_gt(b) / (1 - (1 - p_gt(b))^n)
//! ```
//!
//! where `n` is the cell size and `m` its number of singletons. When every
//! observation is a singleton (`m == n`) the coverage would be zero; `m` is
//! replaced by `n - 1` so the estimate stays finite.
//!
//! All entropies are in bits.

use serde::{Deserialize, Serialize};

use crate::quantize::QuantizedSequence;
use crate::{Error, Result};

/// Symbol counts for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    counts: Vec<u64>,
    total: u64,
    singletons: u64,
}

impl CountTable {
    /// Zero entries are allowed and ignored by the estimators.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("count table has no observations".into()));
        }
        let singletons = counts.iter().filter(|&&c| c == 1).count() as u64;
        Ok(Self {
            counts,
            total,
            singletons,
        })
    }

    pub fn from_symbols(symbols: &[u32]) -> Result<Self> {
        let size = symbols.iter().max().map_or(0, |&m| m as usize + 1);
        let mut counts = vec![0u64; size];
        for &s in symbols {
            counts[s as usize] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn singletons(&self) -> u64 {
        self.singletons
    }
}

/// Which per-cell estimator a conditional entropy uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    ChaoShen,
    /// Maximum-likelihood plug-in, no corrections.
    PlugIn,
}

/// `p(a_j) = count_j / N` over the sequence's alphabet.
pub fn empirical_pmf(seq: &QuantizedSequence) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::Empty("empty sequence".into()));
    }
    let mut counts = vec![0u64; seq.alphabet_size()];
    for &s in seq.symbols() {
        counts[s as usize] += 1;
    }
    let n = seq.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Singleton count used for the coverage factor, with the all-singletons
/// case mapped to `n - 1`.
fn effective_singletons(singletons: u64, total: u64) -> u64 {
    if singletons == total {
        total - 1
    } else {
        singletons
    }
}

/// Good-Turing coverage-corrected frequencies, aligned with `counts.counts()`.
pub fn good_turing_pmf(counts: &CountTable) -> Vec<f64> {
    let n = counts.total as f64;
    let coverage = 1.0 - effective_singletons(counts.singletons, counts.total) as f64 / n;
    counts
        .counts
        .iter()
        .map(|&c| coverage * c as f64 / n)
        .collect()
}

/// Chao-Shen entropy estimate in bits.
pub fn chao_shen_entropy(counts: &CountTable) -> f64 {
    chao_shen_from_counts(&counts.counts, counts.total, counts.singletons)
}

fn chao_shen_from_counts(counts: &[u64], total: u64, singletons: u64) -> f64 {
    let n = total as f64;
    let coverage = 1.0 - effective_singletons(singletons, total) as f64 / n;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = coverage * c as f64 / n;
            let inclusion = 1.0 - (1.0 - p).powf(n);
            -p * p.log2() / inclusion
        })
        .sum();
    // p = 1 gives -0.0
    h.max(0.0)
}

/// Plug-in entropy `-sum p log2 p` in bits.
pub fn plugin_entropy(counts: &CountTable) -> f64 {
    plugin_from_counts(&counts.counts, counts.total)
}

fn plugin_from_counts(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Contingency table of `(x, y)` pairs, one [`CountTable`] row per observed x.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCounts {
    /// `(x symbol, y counts for that x)` in increasing x order.
    pub cells: Vec<(u32, CountTable)>,
    pub x_counts: Vec<u64>,
    pub total: u64,
}

impl JointCounts {
    pub fn new(x: &QuantizedSequence, y: &QuantizedSequence) -> Result<Self> {
        check_pair(x, y)?;
        let (gx, gy) = (x.alphabet_size(), y.alphabet_size());
        let mut table = vec![0u64; gx * gy];
        for (&a, &b) in x.symbols().iter().zip(y.symbols()) {
            table[a as usize * gy + b as usize] += 1;
        }
        let x_counts: Vec<u64> = table.chunks(gy).map(|row| row.iter().sum()).collect();
        let cells = table
            .chunks(gy)
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&c| c > 0))
            .map(|(a, row)| Ok((a as u32, CountTable::from_counts(row.to_vec())?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            cells,
            x_counts,
            total: x.len() as u64,
        })
    }
}

fn check_pair(x: &QuantizedSequence, y: &QuantizedSequence) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("empty sequences".into()));
    }
    Ok(())
}

/// Chao-Shen estimate of `H(Y|X)` in bits.
pub fn conditional_entropy(x: &QuantizedSequence, y: &QuantizedSequence) -> Result<f64> {
    conditional_entropy_with(Estimator::ChaoShen, x, y)
}

pub fn conditional_entropy_with(
    estimator: Estimator,
    x: &QuantizedSequence,
    y: &QuantizedSequence,
) -> Result<f64> {
    check_pair(x, y)?;
    let mut ws = CondEntropyWorkspace::new(x.alphabet_size(), y.alphabet_size());
    Ok(ws.evaluate(estimator, x.symbols(), y.symbols()))
}

/// Scratch table for repeated `H(Y|X)` evaluations over the same alphabets.
///
/// Cells are summed in increasing x order, so results do not depend on how
/// evaluations are scheduled across threads.
#[derive(Debug, Clone)]
pub struct CondEntropyWorkspace {
    gx: usize,
    gy: usize,
    table: Vec<u64>,
    x_counts: Vec<u64>,
}

impl CondEntropyWorkspace {
    pub fn new(gx: usize, gy: usize) -> Self {
        Self {
            gx,
            gy,
            table: vec![0; gx * gy],
            x_counts: vec![0; gx],
        }
    }

    /// Symbols must be below the workspace alphabet sizes and equal in length.
    pub fn evaluate(&mut self, estimator: Estimator, x: &[u32], y: &[u32]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        self.table.fill(0);
        self.x_counts.fill(0);
        for (&a, &b) in x.iter().zip(y) {
            self.table[a as usize * self.gy + b as usize] += 1;
            self.x_counts[a as usize] += 1;
        }
        let n = x.len() as f64;
        let mut h = 0.0;
        for a in 0..self.gx {
            let nj = self.x_counts[a];
            if nj == 0 {
                continue;
            }
            let row = &self.table[a * self.gy..(a + 1) * self.gy];
            let cell = match estimator {
                Estimator::ChaoShen => {
                    let m = row.iter().filter(|&&c| c == 1).count() as u64;
                    chao_shen_from_counts(row, nj, m)
                }
                Estimator::PlugIn => plugin_from_counts(row, nj),
            };
            h += nj as f64 / n * cell;
        }
        h
    }
}

/// `2^h`, the size of a uniform alphabet with the same entropy.
pub fn effective_cardinality(h_bits: f64) -> f64 {
    h_bits.exp2()
}

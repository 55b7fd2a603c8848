//! Discretization of continuous features.
//!
//! Energy and F0 are rounded to the nearest integer. MFCC vectors are mapped to
//! the index of the highest-posterior component of a diagonal-covariance GMM
//! fitted per speaker with EM.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 40;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Variance floor as a fraction of the global per-dimension variance.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-6;
pub const MODEL_VERSION: u32 = 1;

/// What a symbol sequence was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    MfccId,
    Energy,
    F0,
    Voicing,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::MfccId => "mfcc_id",
            Source::Energy => "energy",
            Source::F0 => "f0",
            Source::Voicing => "voicing",
        })
    }
}

/// Dense symbols `0..alphabet_size` with the raw value each symbol stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedSequence {
    symbols: Vec<u32>,
    alphabet_size: usize,
    /// `raw_values[s]` is the raw symbol compacted to `s`.
    raw_values: Vec<i64>,
    pub source: Source,
    pub speaker: String,
}

impl QuantizedSequence {
    /// Wraps already dense symbols. Every symbol must be `< alphabet_size`.
    pub fn from_dense(
        symbols: Vec<u32>,
        alphabet_size: usize,
        source: Source,
        speaker: impl Into<String>,
    ) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Empty("quantized sequence has no symbols".into()));
        }
        if let Some(s) = symbols.iter().find(|&&s| s as usize >= alphabet_size) {
            return Err(Error::invalid(format!(
                "symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        Ok(Self {
            symbols,
            alphabet_size,
            raw_values: (0..alphabet_size as i64).collect(),
            source,
            speaker: speaker.into(),
        })
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn raw_values(&self) -> &[i64] {
        &self.raw_values
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Same alphabet and tags, different symbol order. Used by the shuffler.
    pub(crate) fn with_symbols(&self, symbols: Vec<u32>) -> Self {
        debug_assert_eq!(symbols.len(), self.symbols.len());
        Self {
            symbols,
            alphabet_size: self.alphabet_size,
            raw_values: self.raw_values.clone(),
            source: self.source,
            speaker: self.speaker.clone(),
        }
    }
}

/// Writes `frame_index,symbol` rows, pairing each symbol with the frame it came from.
pub fn write_sequence_csv<W: Write>(
    mut out: W,
    seq: &QuantizedSequence,
    frame_indices: &[usize],
) -> Result<()> {
    if frame_indices.len() != seq.len() {
        return Err(Error::LengthMismatch {
            left: frame_indices.len(),
            right: seq.len(),
        });
    }
    writeln!(out, "frame_index,symbol")?;
    for (i, s) in frame_indices.iter().zip(seq.symbols()) {
        writeln!(out, "{i},{s}")?;
    }
    Ok(())
}

/// Nearest integer, ties away from zero.
pub fn round_quantize(value: f64) -> Result<i64> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("cannot quantize {value}")));
    }
    Ok(value.round() as i64)
}

/// Relabels raw symbols to `0..G` in order of first appearance.
pub fn compact_alphabet(
    raw: &[i64],
    source: Source,
    speaker: impl Into<String>,
) -> Result<QuantizedSequence> {
    if raw.is_empty() {
        return Err(Error::Empty("cannot compact an empty sequence".into()));
    }
    let mut index: HashMap<i64, u32> = HashMap::new();
    let mut raw_values = Vec::new();
    let symbols = raw
        .iter()
        .map(|&r| {
            *index.entry(r).or_insert_with(|| {
                raw_values.push(r);
                (raw_values.len() - 1) as u32
            })
        })
        .collect();
    Ok(QuantizedSequence {
        symbols,
        alphabet_size: raw_values.len(),
        raw_values,
        source,
        speaker: speaker.into(),
    })
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub version: u32,
    pub speaker: String,
    #[serde(rename = "K")]
    pub num_components: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub train_log_likelihood: f64,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_components;
        if k == 0 || self.weights.len() != k || self.means.len() != k || self.variances.len() != k
        {
            return Err(Error::invalid("model component counts disagree"));
        }
        let dim = self.dim();
        if self
            .means
            .iter()
            .chain(&self.variances)
            .any(|v| v.len() != dim)
        {
            return Err(Error::invalid("model dimensions disagree"));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("model weights must be positive"));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("model weights do not sum to 1"));
        }
        if self.variances.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("model variances must be positive"));
        }
        Ok(())
    }

    fn components(&self) -> Vec<Component<'_>> {
        (0..self.num_components)
            .map(|k| Component::new(self.weights[k], &self.means[k], &self.variances[k]))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: GmmModel = serde_json::from_slice(&std::fs::read(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Per-component terms cached for log-density evaluation.
struct Component<'a> {
    mean: &'a [f64],
    inv_var: Vec<f64>,
    /// `ln w - 0.5 * sum ln(2 pi var)`
    log_norm: f64,
}

impl<'a> Component<'a> {
    fn new(weight: f64, mean: &'a [f64], var: &[f64]) -> Self {
        let log_det: f64 = var
            .iter()
            .map(|v| (2.0 * std::f64::consts::PI * v).ln())
            .sum();
        Self {
            mean,
            inv_var: var.iter().map(|v| 1.0 / v).collect(),
            log_norm: weight.ln() - 0.5 * log_det,
        }
    }

    /// `ln w_k + ln N(x | mu_k, diag var_k)`
    fn log_joint(&self, x: &[f64]) -> f64 {
        let mahal: f64 = x
            .iter()
            .zip(self.mean)
            .zip(&self.inv_var)
            .map(|((x, m), iv)| (x - m) * (x - m) * iv)
            .sum();
        self.log_norm - 0.5 * mahal
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Component with the highest posterior; ties go to the lowest index.
pub fn gmm_assign(model: &GmmModel, vector: &[f64]) -> usize {
    let comps = model.components();
    argmax_first(comps.iter().map(|c| c.log_joint(vector)))
}

/// Assigns every vector, refusing data tagged with a different speaker.
pub fn quantize_mfcc(model: &GmmModel, speaker: &str, vectors: &[Vec<f64>]) -> Result<Vec<usize>> {
    if model.speaker != speaker {
        return Err(Error::SpeakerMismatch {
            expected: model.speaker.clone(),
            found: speaker.to_string(),
        });
    }
    let dim = model.dim();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: dim,
        });
    }
    let comps = model.components();
    Ok(vectors
        .par_iter()
        .map(|v| argmax_first(comps.iter().map(|c| c.log_joint(v))))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmOptions {
    pub components: usize,
    pub max_iters: usize,
    /// Stop when `|ll_t - ll_{t-1}| < tol * |ll_{t-1}|`.
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            components: DEFAULT_COMPONENTS,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// A fitted model plus the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total data log-likelihood after each E-step, starting from the initial model.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    /// Number of components re-seeded because they lost all responsibility.
    pub reseeded: usize,
}

/// Fits a diagonal GMM by EM.
///
/// Means are seeded k-means++ style from the data, weights start uniform and
/// variances start at the global per-dimension variance. Variances are floored
/// at `VARIANCE_FLOOR_RATIO` times the global variance. The result is bitwise
/// reproducible for a given `seed`.
pub fn gmm_fit(
    vectors: &[Vec<f64>],
    speaker: &str,
    seed: u64,
    options: &GmmOptions,
) -> Result<GmmFit> {
    let k = options.components;
    if k == 0 {
        return Err(Error::invalid("need at least one component"));
    }
    let n = vectors.len();
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::invalid("vectors must be non-empty"));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: dim,
        });
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite value in training data"));
    }
    let distinct: HashSet<Vec<u64>> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::invalid(format!(
            "{} distinct vectors cannot support {k} components",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global_mean: Vec<f64> = (0..dim)
        .map(|d| vectors.iter().map(|v| v[d]).sum::<f64>() / n as f64)
        .collect();
    let global_var: Vec<f64> = (0..dim)
        .map(|d| {
            vectors
                .iter()
                .map(|v| (v[d] - global_mean[d]).powi(2))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let var_floor: Vec<f64> = global_var
        .iter()
        .map(|v| (v * VARIANCE_FLOOR_RATIO).max(f64::MIN_POSITIVE))
        .collect();
    let init_var: Vec<f64> = global_var
        .iter()
        .zip(&var_floor)
        .map(|(v, f)| v.max(*f))
        .collect();

    let mut model = GmmModel {
        version: MODEL_VERSION,
        speaker: speaker.to_string(),
        num_components: k,
        seed,
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(vectors, k, &mut rng),
        variances: vec![init_var.clone(); k],
        train_log_likelihood: f64::NEG_INFINITY,
    };

    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut reseeded = 0;
    for _ in 0..options.max_iters {
        let ll = e_step(&model, vectors, &mut resp);
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            trace.push(ll);
            if (ll - prev).abs() < options.tol * prev.abs() {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        reseeded += m_step(&mut model, vectors, &resp, &var_floor, &init_var, &mut rng);
    }
    if !converged {
        // the last M-step moved the parameters; score them
        trace.push(e_step(&model, vectors, &mut resp));
    }
    model.train_log_likelihood = *trace.last().expect("at least one E-step");
    Ok(GmmFit {
        model,
        log_likelihood_trace: trace,
        converged,
        reseeded,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut centers = vec![vectors[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        let c = vectors[pick].clone();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &c));
        }
        centers.push(c);
    }
    centers
}

/// Fills `resp` (row-major `n x k`) with posteriors and returns the total
/// log-likelihood, summed in data order.
fn e_step(model: &GmmModel, vectors: &[Vec<f64>], resp: &mut [f64]) -> f64 {
    let k = model.num_components;
    let comps = model.components();
    let per_point: Vec<f64> = resp
        .par_chunks_mut(k)
        .zip(vectors.par_iter())
        .map(|(row, x)| {
            let mut max = f64::NEG_INFINITY;
            for (r, c) in row.iter_mut().zip(&comps) {
                *r = c.log_joint(x);
                max = max.max(*r);
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            max + sum.ln()
        })
        .collect();
    per_point.iter().sum()
}

/// Returns the number of re-seeded components.
fn m_step(
    model: &mut GmmModel,
    vectors: &[Vec<f64>],
    resp: &[f64],
    var_floor: &[f64],
    init_var: &[f64],
    rng: &mut ChaCha8Rng,
) -> usize {
    let k = model.num_components;
    let n = vectors.len();
    let dim = var_floor.len();
    let mut reseeded = 0;
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
        if nk < 1e-10 {
            let pick = rng.random_range(0..n);
            log::warn!("GMM component {c} lost all responsibility; re-seeding at data point {pick}");
            model.means[c] = vectors[pick].clone();
            model.variances[c] = init_var.to_vec();
            model.weights[c] = 1.0 / k as f64;
            reseeded += 1;
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (i, x) in vectors.iter().enumerate() {
            let r = resp[i * k + c];
            for (m, v) in mean.iter_mut().zip(x) {
                *m += r * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; dim];
        for (i, x) in vectors.iter().enumerate() {
            let r = resp[i * k + c];
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += r * (v - m) * (v - m);
            }
        }
        for (s, f) in var.iter_mut().zip(var_floor) {
            *s = (*s / nk).max(*f);
        }
        model.means[c] = mean;
        model.variances[c] = var;
        model.weights[c] = nk / n as f64;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    reseeded
}

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use spt_core::corpus::{self, FixtureSpec};
use spt_core::dsp::{self, DspConfig, MfccExtractor, SignalBuffer};
use spt_core::entropy::{self, CountTable, Estimator};
use spt_core::perm_test::{self, TestOptions};
use spt_core::prosody::{self, F0Label};
use spt_core::quantize::{self, GmmModel, GmmOptions, QuantizedSequence, Source};

fn to_py(err: spt_core::Error) -> PyErr {
    match err {
        spt_core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn estimator(name: &str) -> PyResult<Estimator> {
    match name {
        "chao_shen" => Ok(Estimator::ChaoShen),
        "plug_in" | "plugin" => Ok(Estimator::PlugIn),
        other => Err(PyValueError::new_err(format!(
            "unknown estimator {other:?}; expected 'chao_shen' or 'plug_in'"
        ))),
    }
}

fn dense(raw: &[i64], source: Source) -> PyResult<QuantizedSequence> {
    quantize::compact_alphabet(raw, source, "").map_err(to_py)
}

/// Per-frame (center times, log-energies, MFCC rows) of a mono signal.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate=20000, nfft=512, num_mel_filters=23, num_mfcc=13, preemphasis=0.97))]
fn extract_features(
    samples: Vec<f64>,
    sample_rate: u32,
    nfft: usize,
    num_mel_filters: usize,
    num_mfcc: usize,
    preemphasis: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let config = DspConfig {
        sample_rate_hz: sample_rate,
        nfft,
        num_mel_filters,
        num_mfcc,
        preemphasis,
        ..DspConfig::default()
    };
    let extractor = MfccExtractor::new(&config).map_err(to_py)?;
    let signal = SignalBuffer::new(samples, sample_rate).map_err(to_py)?;
    let frames = extractor.analyze(&signal).map_err(to_py)?;
    let times = frames.iter().map(|f| f.center_time_s).collect();
    let energy = frames.iter().map(|f| f.log_energy).collect();
    let mfcc = frames.into_iter().map(|f| f.mfcc).collect();
    Ok((times, energy, mfcc))
}

#[pyfunction]
fn log_energy(samples: Vec<f64>) -> f64 {
    dsp::log_energy(&samples)
}

#[pyfunction]
#[pyo3(signature = (energies, num_coeffs=13))]
fn dct_mfcc(energies: Vec<f64>, num_coeffs: usize) -> Vec<f64> {
    dsp::dct_mfcc(&energies, num_coeffs).coeffs
}

#[pyfunction]
fn hz_to_mel(hz: f64) -> f64 {
    dsp::hz_to_mel(hz)
}

/// Filter weight rows over DFT bins `0..=nfft/2`.
#[pyfunction]
#[pyo3(signature = (sample_rate=20000, nfft=512, num_filters=23, f_low=0.0, f_high=None))]
fn mel_filterbank(
    sample_rate: u32,
    nfft: usize,
    num_filters: usize,
    f_low: f64,
    f_high: Option<f64>,
) -> PyResult<Vec<Vec<f64>>> {
    let f_high = f_high.unwrap_or(sample_rate as f64 / 2.0);
    let fb = dsp::build_mel_filterbank(sample_rate, nfft, num_filters, f_low, f_high).map_err(to_py)?;
    Ok(fb.weights().to_vec())
}

/// Frame-synchronous (f0, voicing) from label times and values.
#[pyfunction]
#[pyo3(signature = (label_times, label_f0, frame_times, max_gap=prosody::DEFAULT_MAX_GAP_S))]
fn interpolate_f0(
    label_times: Vec<f64>,
    label_f0: Vec<f64>,
    frame_times: Vec<f64>,
    max_gap: f64,
) -> PyResult<(Vec<f64>, Vec<u32>)> {
    if label_times.len() != label_f0.len() {
        return Err(PyValueError::new_err("label_times and label_f0 differ in length"));
    }
    let labels: Vec<F0Label> = label_times
        .into_iter()
        .zip(label_f0)
        .map(|(time, f0)| F0Label { time, f0 })
        .collect();
    let contour = prosody::interpolate_f0(&labels, &frame_times, max_gap).map_err(to_py)?;
    // widened so Python sees a list rather than `bytes`
    let voicing = contour.voicing_per_frame.into_iter().map(u32::from).collect();
    Ok((contour.f0_per_frame, voicing))
}

#[pyfunction]
fn round_quantize(value: f64) -> PyResult<i64> {
    quantize::round_quantize(value).map_err(to_py)
}

/// `(dense symbols, alphabet size)` relabelled by first appearance.
#[pyfunction]
fn compact_alphabet(raw: Vec<i64>) -> PyResult<(Vec<u32>, usize)> {
    let q = dense(&raw, Source::F0)?;
    Ok((q.symbols().to_vec(), q.alphabet_size()))
}

#[pyfunction]
fn good_turing_pmf(counts: Vec<u64>) -> PyResult<Vec<f64>> {
    Ok(entropy::good_turing_pmf(&CountTable::from_counts(counts).map_err(to_py)?))
}

#[pyfunction]
fn chao_shen_entropy(counts: Vec<u64>) -> PyResult<f64> {
    Ok(entropy::chao_shen_entropy(&CountTable::from_counts(counts).map_err(to_py)?))
}

/// `H(Y|X)` in bits for two equal-length integer sequences.
#[pyfunction]
#[pyo3(signature = (x, y, estimator="chao_shen"))]
fn conditional_entropy(x: Vec<i64>, y: Vec<i64>, estimator: &str) -> PyResult<f64> {
    let est = self::estimator(estimator)?;
    entropy::conditional_entropy_with(est, &dense(&x, Source::MfccId)?, &dense(&y, Source::F0)?)
        .map_err(to_py)
}

#[pyfunction]
fn effective_cardinality(h_bits: f64) -> f64 {
    entropy::effective_cardinality(h_bits)
}

/// Diagonal-covariance GMM quantizer.
#[pyclass(module = "spt")]
struct Gmm {
    model: GmmModel,
    trace: Vec<f64>,
}

#[pymethods]
impl Gmm {
    #[staticmethod]
    #[pyo3(signature = (vectors, components=quantize::DEFAULT_COMPONENTS, seed=0, speaker="", max_iters=quantize::DEFAULT_MAX_ITERS, tol=quantize::DEFAULT_TOL))]
    fn fit(
        py: Python<'_>,
        vectors: Vec<Vec<f64>>,
        components: usize,
        seed: u64,
        speaker: &str,
        max_iters: usize,
        tol: f64,
    ) -> PyResult<Self> {
        let options = GmmOptions {
            components,
            max_iters,
            tol,
        };
        let fit = py
            .detach(|| quantize::gmm_fit(&vectors, speaker, seed, &options))
            .map_err(to_py)?;
        Ok(Self {
            model: fit.model,
            trace: fit.log_likelihood_trace,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let model: GmmModel =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        model.validate().map_err(to_py)?;
        Ok(Self {
            model,
            trace: Vec::new(),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.model).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn assign(&self, vector: Vec<f64>) -> PyResult<usize> {
        if vector.len() != self.model.dim() {
            return Err(PyValueError::new_err("vector dimension does not match the model"));
        }
        Ok(quantize::gmm_assign(&self.model, &vector))
    }

    fn assign_all(&self, vectors: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        quantize::quantize_mfcc(&self.model, &self.model.speaker, &vectors).map_err(to_py)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.model.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.model.means.clone()
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        self.model.variances.clone()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.model.train_log_likelihood
    }

    /// Per-iteration training log-likelihoods (empty for loaded models).
    #[getter]
    fn log_likelihood_trace(&self) -> Vec<f64> {
        self.trace.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Gmm(K={}, dim={}, speaker={:?})",
            self.model.num_components,
            self.model.dim(),
            self.model.speaker
        )
    }
}

/// Outcome of a permutation test.
#[pyclass(module = "spt", get_all)]
struct PermutationResult {
    h_test: f64,
    c_test: f64,
    p_count: u64,
    p_value_bound: f64,
    p_value: String,
    null_samples: Vec<f64>,
    report_json: String,
}

#[pymethods]
impl PermutationResult {
    fn __repr__(&self) -> String {
        format!(
            "PermutationResult(c_test={:.4}, p_count={}, {})",
            self.c_test, self.p_count, self.p_value
        )
    }
}

/// Permutation test of `H(Y|X)` against `trials` shuffles of `y`.
#[pyfunction]
#[pyo3(signature = (x, y, trials=perm_test::DEFAULT_TRIALS, seed=0, estimator="chao_shen"))]
fn run_test(
    py: Python<'_>,
    x: Vec<i64>,
    y: Vec<i64>,
    trials: usize,
    seed: u64,
    estimator: &str,
) -> PyResult<PermutationResult> {
    let options = TestOptions {
        trials,
        seed,
        estimator: self::estimator(estimator)?,
    };
    let xs = dense(&x, Source::MfccId)?;
    let ys = dense(&y, Source::F0)?;
    let outcome = py
        .detach(|| perm_test::run_test(&xs, &ys, &options))
        .map_err(to_py)?;
    let report_json = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let r = outcome.report;
    Ok(PermutationResult {
        h_test: r.h_test,
        c_test: r.c_test,
        p_count: r.p_count,
        p_value_bound: r.p_value_bound,
        p_value: r.p_value,
        null_samples: outcome.null.samples,
        report_json,
    })
}

/// Writes a synthetic corpus and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=7, utterances=2, duration=1.0, voiced_fraction=0.6))]
fn synth_fixture(
    out_dir: PathBuf,
    seed: u64,
    utterances: usize,
    duration: f64,
    voiced_fraction: f64,
) -> PyResult<PathBuf> {
    std::fs::create_dir_all(&out_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let spec = FixtureSpec {
        seed,
        num_utterances: utterances,
        duration_s: duration,
        voiced_fraction,
        ..FixtureSpec::default()
    };
    corpus::synth_fixture(&out_dir, &spec).map_err(to_py)
}

#[pymodule]
fn spt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(log_energy, m)?)?;
    m.add_function(wrap_pyfunction!(dct_mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(hz_to_mel, m)?)?;
    m.add_function(wrap_pyfunction!(mel_filterbank, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate_f0, m)?)?;
    m.add_function(wrap_pyfunction!(round_quantize, m)?)?;
    m.add_function(wrap_pyfunction!(compact_alphabet, m)?)?;
    m.add_function(wrap_pyfunction!(good_turing_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(chao_shen_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(effective_cardinality, m)?)?;
    m.add_function(wrap_pyfunction!(run_test, m)?)?;
    m.add_function(wrap_pyfunction!(synth_fixture, m)?)?;
    m.add_class::<Gmm>()?;
    m.add_class::<PermutationResult>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

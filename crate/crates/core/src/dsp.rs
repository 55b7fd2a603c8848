//! Framing, log-energy and MFCC extraction.
//!
//! The MFCC pipeline per frame is: pre-emphasis, Hamming window, zero-padded
//! unnormalized DFT magnitude, triangular mel filterbank with unit-peak
//! filters, natural log, and a DCT-II without the `z = 0` term.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 20_000;
pub const DEFAULT_FRAME_MS: f64 = 20.0;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_NFFT: usize = 512;
pub const DEFAULT_NUM_MEL_FILTERS: usize = 23;
pub const DEFAULT_NUM_MFCC: usize = 13;
pub const DEFAULT_PREEMPHASIS: f64 = 0.97;
/// Floor applied before taking the log of frame energy.
pub const ENERGY_FLOOR: f64 = 1e-12;
/// Floor applied to mel filterbank outputs before the log.
pub const FILTERBANK_FLOOR: f64 = 1e-12;

/// DSP parameters. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub frame_ms: f64,
    pub overlap: f64,
    pub nfft: usize,
    pub num_mel_filters: usize,
    pub num_mfcc: usize,
    pub preemphasis: f64,
    pub f_low_hz: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub f_high_hz: Option<f64>,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            frame_ms: DEFAULT_FRAME_MS,
            overlap: DEFAULT_OVERLAP,
            nfft: DEFAULT_NFFT,
            num_mel_filters: DEFAULT_NUM_MEL_FILTERS,
            num_mfcc: DEFAULT_NUM_MFCC,
            preemphasis: DEFAULT_PREEMPHASIS,
            f_low_hz: 0.0,
            f_high_hz: None,
        }
    }
}

impl DspConfig {
    /// Frame length in samples (400 at 20 kHz / 20 ms).
    pub fn frame_len(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_ms / 1000.0).round() as usize
    }

    /// Hop in samples (200 at 50 % overlap).
    pub fn hop(&self) -> usize {
        (self.frame_len() as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn f_high(&self) -> f64 {
        self.f_high_hz
            .unwrap_or(self.sample_rate_hz as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::config("sample_rate_hz must be positive"));
        }
        if !(self.frame_ms > 0.0) {
            return Err(Error::config("frame_ms must be positive"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config("overlap must lie in [0, 1)"));
        }
        let frame_len = self.frame_len();
        if frame_len < 2 {
            return Err(Error::config("frame shorter than two samples"));
        }
        let hop = self.hop();
        if hop == 0 || hop > frame_len {
            return Err(Error::config(format!("invalid hop {hop}")));
        }
        if self.nfft < frame_len {
            return Err(Error::config(format!(
                "nfft {} is shorter than the frame ({frame_len} samples)",
                self.nfft
            )));
        }
        if self.num_mel_filters == 0 {
            return Err(Error::config("num_mel_filters must be positive"));
        }
        if self.num_mfcc == 0 {
            return Err(Error::config("num_mfcc must be positive"));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::config("preemphasis must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// A mono signal with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl SignalBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One analysis window cut from a [`SignalBuffer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub samples: Vec<f64>,
    pub start_index: usize,
    pub center_time: f64,
}

/// Cuts `signal` into frames `[i*hop, i*hop + frame_len)`, discarding a trailing
/// partial frame.
pub fn frame_signal(signal: &SignalBuffer, frame_len: usize, hop: usize) -> Result<Vec<Frame>> {
    if frame_len == 0 {
        return Err(Error::config("frame_len must be at least 1"));
    }
    if hop == 0 || hop > frame_len {
        return Err(Error::config("hop must lie in [1, frame_len]"));
    }
    let n = signal.len();
    if n < frame_len {
        return Err(Error::Empty(format!(
            "signal of {n} samples is shorter than one frame ({frame_len})"
        )));
    }
    let count = (n - frame_len) / hop + 1;
    let rate = signal.sample_rate() as f64;
    Ok((0..count)
        .map(|i| {
            let start = i * hop;
            Frame {
                samples: signal.samples[start..start + frame_len].to_vec(),
                start_index: start,
                center_time: (start as f64 + frame_len as f64 / 2.0) / rate,
            }
        })
        .collect())
}

/// `ln(sum s[n]^2)`, floored at `ln(ENERGY_FLOOR)`.
pub fn log_energy(samples: &[f64]) -> f64 {
    let energy: f64 = samples.iter().map(|s| s * s).sum();
    energy.max(ENERGY_FLOOR).ln()
}

/// First-order high-pass `s[n] - alpha*s[n-1]`; the sample before the frame is 0.
pub fn pre_emphasis(samples: &[f64], alpha: f64) -> Vec<f64> {
    let mut prev = 0.0;
    samples
        .iter()
        .map(|&s| {
            let out = s - alpha * prev;
            prev = s;
            out
        })
        .collect()
}

/// Hamming window coefficients `0.54 - 0.46 cos(2 pi n / (M - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}

pub fn apply_window(samples: &[f64]) -> Vec<f64> {
    samples
        .iter()
        .zip(hamming(samples.len()))
        .map(|(s, w)| s * w)
        .collect()
}

/// `|DFT|` of the frame zero-padded to `nfft`, all `nfft` bins, no scaling.
pub fn magnitude_spectrum(samples: &[f64], nfft: usize) -> Result<Vec<f64>> {
    if nfft < samples.len() {
        return Err(Error::config(format!(
            "nfft {nfft} is shorter than the frame ({})",
            samples.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    Ok(spectrum_with(&*fft, samples, nfft))
}

fn spectrum_with(fft: &dyn Fft<f64>, samples: &[f64], nfft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    fft.process(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the non-redundant DFT bins `0..=nfft/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    center_freqs_hz: Vec<f64>,
    boundary_bins: Vec<usize>,
    nfft: usize,
}

impl MelFilterbank {
    pub fn num_filters(&self) -> usize {
        self.weights.len()
    }

    /// Number of DFT bins each filter spans (`nfft/2 + 1`).
    pub fn num_bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn center_freqs_hz(&self) -> &[f64] {
        &self.center_freqs_hz
    }

    /// The `num_filters + 2` boundary points mapped to DFT bins.
    pub fn boundary_bins(&self) -> &[usize] {
        &self.boundary_bins
    }
}

/// Builds `num_filters` unit-peak triangles whose boundary points are equally
/// spaced on the mel scale between `f_low` and `f_high`. Filter `h` rises from
/// boundary `h-1` to `h` and falls to `h+1`.
pub fn build_mel_filterbank(
    sample_rate: u32,
    nfft: usize,
    num_filters: usize,
    f_low: f64,
    f_high: f64,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= f_low && f_low < f_high && f_high <= nyquist) {
        return Err(Error::config(format!(
            "filterbank range [{f_low}, {f_high}] Hz must satisfy 0 <= low < high <= {nyquist}"
        )));
    }
    if num_filters == 0 || nfft < 2 {
        return Err(Error::config("need at least one filter and nfft >= 2"));
    }
    let mel_low = hz_to_mel(f_low);
    let mel_high = hz_to_mel(f_high);
    let step = (mel_high - mel_low) / (num_filters + 1) as f64;
    let points_hz: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(mel_low + step * i as f64))
        .collect();
    let max_bin = nfft / 2;
    let boundary_bins: Vec<usize> = points_hz
        .iter()
        .map(|&f| {
            let bin = ((nfft + 1) as f64 * f / sample_rate as f64).floor() as usize;
            bin.min(max_bin)
        })
        .collect();
    if let Some(w) = boundary_bins.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::config(format!(
            "mel boundaries {w} and {} fall on the same DFT bin {}; increase nfft or reduce filters",
            w + 1,
            boundary_bins[w]
        )));
    }

    let weights = (1..=num_filters)
        .map(|h| {
            let (lo, mid, hi) = (boundary_bins[h - 1], boundary_bins[h], boundary_bins[h + 1]);
            let mut w = vec![0.0; max_bin + 1];
            for (l, wl) in w.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *wl = if l <= mid {
                    (l - lo) as f64 / (mid - lo) as f64
                } else {
                    (hi - l) as f64 / (hi - mid) as f64
                };
            }
            w
        })
        .collect();

    Ok(MelFilterbank {
        weights,
        center_freqs_hz: points_hz[1..=num_filters].to_vec(),
        boundary_bins,
        nfft,
    })
}

/// `fb_h = sum_l W_h[l] F_l`, floored at [`FILTERBANK_FLOOR`]. Accepts either the
/// full `nfft`-bin spectrum or just its non-redundant half.
pub fn mel_energies(spectrum: &[f64], fb: &MelFilterbank) -> Result<Vec<f64>> {
    let bins = fb.num_bins();
    if spectrum.len() != bins && spectrum.len() != fb.nfft {
        return Err(Error::LengthMismatch {
            left: spectrum.len(),
            right: bins,
        });
    }
    Ok(fb
        .weights
        .iter()
        .map(|w| {
            w.iter()
                .zip(&spectrum[..bins])
                .map(|(w, f)| w * f)
                .sum::<f64>()
                .max(FILTERBANK_FLOOR)
        })
        .collect())
}

/// Cepstral coefficients of one frame, `coeffs[z-1]` holding `mfc_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccVector {
    pub coeffs: Vec<f64>,
}

/// `mfc_z = sum_h ln(fb_h) cos(pi z (h - 0.5) / H)` for `z = 1..=num_coeffs`.
pub fn dct_mfcc(filterbank_energies: &[f64], num_coeffs: usize) -> MfccVector {
    let h_count = filterbank_energies.len() as f64;
    let logs: Vec<f64> = filterbank_energies.iter().map(|e| e.ln()).collect();
    let coeffs = (1..=num_coeffs)
        .map(|z| {
            logs.iter()
                .enumerate()
                .map(|(i, l)| {
                    let h = (i + 1) as f64;
                    l * (std::f64::consts::PI * z as f64 * (h - 0.5) / h_count).cos()
                })
                .sum()
        })
        .collect();
    MfccVector { coeffs }
}

/// Reusable MFCC pipeline holding the filterbank, window and FFT plan.
#[derive(Clone)]
pub struct MfccExtractor {
    config: DspConfig,
    filterbank: Arc<MelFilterbank>,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(config: &DspConfig) -> Result<Self> {
        config.validate()?;
        let filterbank = build_mel_filterbank(
            config.sample_rate_hz,
            config.nfft,
            config.num_mel_filters,
            config.f_low_hz,
            config.f_high(),
        )?;
        Ok(Self {
            config: config.clone(),
            filterbank: Arc::new(filterbank),
            window: hamming(config.frame_len()),
            fft: FftPlanner::new().plan_fft_forward(config.nfft),
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn extract(&self, samples: &[f64]) -> Result<MfccVector> {
        if samples.len() != self.window.len() {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: self.window.len(),
            });
        }
        let windowed: Vec<f64> = pre_emphasis(samples, self.config.preemphasis)
            .into_iter()
            .zip(&self.window)
            .map(|(s, w)| s * w)
            .collect();
        let spectrum = spectrum_with(&*self.fft, &windowed, self.config.nfft);
        let energies = mel_energies(&spectrum, &self.filterbank)?;
        Ok(dct_mfcc(&energies, self.config.num_mfcc))
    }

    /// Frames the signal and computes log-energy and MFCCs for every frame.
    pub fn analyze(&self, signal: &SignalBuffer) -> Result<Vec<SpectralFrame>> {
        if signal.sample_rate() != self.config.sample_rate_hz {
            return Err(Error::invalid(format!(
                "signal sampled at {} Hz, extractor configured for {} Hz",
                signal.sample_rate(),
                self.config.sample_rate_hz
            )));
        }
        let frames = frame_signal(signal, self.config.frame_len(), self.config.hop())?;
        frames
            .iter()
            .enumerate()
            .map(|(i, frame)| {
                Ok(SpectralFrame {
                    frame_index: i,
                    center_time_s: frame.center_time,
                    log_energy: log_energy(&frame.samples),
                    mfcc: self.extract(&frame.samples)?.coeffs,
                })
            })
            .collect()
    }
}

/// Convenience wrapper for one-off extraction.
pub fn extract_mfcc(frame: &Frame, config: &DspConfig) -> Result<MfccVector> {
    MfccExtractor::new(config)?.extract(&frame.samples)
}

/// Per-frame spectral features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFrame {
    pub frame_index: usize,
    pub center_time_s: f64,
    pub log_energy: f64,
    pub mfcc: Vec<f64>,
}

fn feature_header(num_mfcc: usize) -> Vec<String> {
    let mut cols = vec![
        "frame_index".to_string(),
        "center_time_s".to_string(),
        "log_energy".to_string(),
    ];
    cols.extend((1..=num_mfcc).map(|z| format!("mfcc_{z}")));
    cols
}

/// CSV with columns `frame_index, center_time_s, log_energy, mfcc_1..mfcc_K`.
pub fn write_features_csv<W: Write>(mut out: W, frames: &[SpectralFrame]) -> Result<()> {
    let num_mfcc = frames.first().map_or(DEFAULT_NUM_MFCC, |f| f.mfcc.len());
    writeln!(out, "{}", feature_header(num_mfcc).join(","))?;
    for f in frames {
        write!(out, "{},{},{}", f.frame_index, f.center_time_s, f.log_energy)?;
        for c in &f.mfcc {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// JSON lines with the same field order as [`write_features_csv`].
pub fn write_features_jsonl<W: Write>(mut out: W, frames: &[SpectralFrame]) -> Result<()> {
    for f in frames {
        write!(
            out,
            "{{\"frame_index\":{},\"center_time_s\":{},\"log_energy\":{}",
            f.frame_index,
            json_f64(f.center_time_s),
            json_f64(f.log_energy)
        )?;
        for (z, c) in f.mfcc.iter().enumerate() {
            write!(out, ",\"mfcc_{}\":{}", z + 1, json_f64(*c))?;
        }
        writeln!(out, "}}")?;
    }
    Ok(())
}

fn json_f64(v: f64) -> String {
    serde_json::Number::from_f64(v).map_or_else(|| "null".to_string(), |n| n.to_string())
}

//! Corpus ingestion, per-speaker sequence assembly and synthetic fixtures.
//!
//! A corpus is described by a JSON manifest mapping each speaker to its
//! utterances:
//!
//! ```json
//! { "female": [ { "id": "f_001", "audio": "female/f_001.wav", "labels": "female/f_001.f0" } ] }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Audio must be
//! mono 16-bit PCM WAV at the configured rate. Label files hold one
//! `time_seconds f0_hz` pair per line.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{DspConfig, MfccExtractor, SignalBuffer};
use crate::prosody::{self, F0Label};
use crate::quantize::{self, compact_alphabet, GmmModel, QuantizedSequence, Source};
use crate::{AudioErrorKind, Error, Result};

/// Prosodic feature tested against the MFCC symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    F0,
    Energy,
    Voicing,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::F0, Feature::Energy, Feature::Voicing];

    pub fn source(self) -> Source {
        match self {
            Feature::F0 => Source::F0,
            Feature::Energy => Source::Energy,
            Feature::Voicing => Source::Voicing,
        }
    }

    /// Energy and F0 are only analysed over voiced frames.
    pub fn voiced_only(self) -> bool {
        !matches!(self, Feature::Voicing)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feature::F0 => "f0",
            Feature::Energy => "energy",
            Feature::Voicing => "voicing",
        })
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f0" => Ok(Feature::F0),
            "energy" => Ok(Feature::Energy),
            "voicing" => Ok(Feature::Voicing),
            other => Err(Error::invalid(format!("unknown feature {other:?}"))),
        }
    }
}

/// Stable 64-bit seed for a named stage, e.g. `derive_seed(seed, &["gmm", "female"])`.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    // FNV-1a over the parts, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn audio_error(kind: AudioErrorKind, path: &Path, message: impl Into<String>) -> Error {
    Error::Audio {
        kind,
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a mono 16-bit PCM WAV, scaling samples to `[-1, 1)`.
pub fn load_audio(path: &Path, expected_rate: u32) -> Result<SignalBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => audio_error(AudioErrorKind::UnsupportedFormat, path, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_error(
            AudioErrorKind::Channels,
            path,
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(audio_error(
            AudioErrorKind::UnsupportedFormat,
            path,
            format!(
                "expected 16-bit PCM, found {}-bit {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    if spec.sample_rate != expected_rate {
        return Err(audio_error(
            AudioErrorKind::RateMismatch,
            path,
            format!("sampled at {} Hz, expected {expected_rate} Hz", spec.sample_rate),
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f64 / 32768.0)
                .map_err(|e| audio_error(AudioErrorKind::UnsupportedFormat, path, e.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    SignalBuffer::new(samples, spec.sample_rate)
}

/// Writes mono 16-bit PCM; samples are clipped to `[-1, 1)`.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::invalid(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: PathBuf,
    pub labels: PathBuf,
}

/// Speaker to utterance listing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub speakers: BTreeMap<String, Vec<ManifestEntry>>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut manifest: Manifest = serde_json::from_slice(&std::fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in manifest.speakers.values_mut().flatten() {
            if entry.audio.is_relative() {
                entry.audio = base.join(&entry.audio);
            }
            if entry.labels.is_relative() {
                entry.labels = base.join(&entry.labels);
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn utterances(&self, speaker: &str) -> Result<Vec<Utterance>> {
        let entries = self
            .speakers
            .get(speaker)
            .ok_or_else(|| Error::invalid(format!("speaker {speaker:?} not in manifest")))?;
        Ok(entries
            .iter()
            .map(|e| Utterance {
                id: e.id.clone(),
                speaker: speaker.to_string(),
                audio_path: e.audio.clone(),
                label_path: e.labels.clone(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub audio_path: PathBuf,
    pub label_path: PathBuf,
}

/// Everything measured on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub frame_index: usize,
    pub center_time_s: f64,
    pub log_energy: f64,
    pub mfcc: Vec<f64>,
    pub f0_hz: f64,
    pub voicing: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    #[serde(flatten)]
    pub dsp: DspConfig,
    pub max_gap_s: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            dsp: DspConfig::default(),
            max_gap_s: prosody::DEFAULT_MAX_GAP_S,
        }
    }
}

/// Audio and label processing for one utterance.
pub fn extract_utterance(
    utt: &Utterance,
    extractor: &MfccExtractor,
    max_gap_s: f64,
) -> Result<Vec<FeatureFrame>> {
    let run = || -> Result<Vec<FeatureFrame>> {
        let signal = load_audio(&utt.audio_path, extractor.config().sample_rate_hz)?;
        let text = std::fs::read_to_string(&utt.label_path).map_err(|e| {
            Error::invalid(format!("label file {}: {e}", utt.label_path.display()))
        })?;
        let labels = prosody::parse_labels(&text)?;
        let spectral = extractor.analyze(&signal)?;
        let times: Vec<f64> = spectral.iter().map(|f| f.center_time_s).collect();
        let contour = prosody::interpolate_f0(&labels, &times, max_gap_s)?;
        Ok(spectral
            .into_iter()
            .zip(contour.f0_per_frame.into_iter().zip(contour.voicing_per_frame))
            .map(|(s, (f0_hz, voicing))| FeatureFrame {
                frame_index: s.frame_index,
                center_time_s: s.center_time_s,
                log_energy: s.log_energy,
                mfcc: s.mfcc,
                f0_hz,
                voicing,
            })
            .collect())
    };
    run().map_err(|e| e.in_utterance(&utt.id))
}

/// A speaker's frames, concatenated across utterances sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerDataset {
    pub speaker: String,
    /// `(utterance id, frame count)` in concatenation order.
    pub utterances: Vec<(String, usize)>,
    pub frames: Vec<FeatureFrame>,
}

impl SpeakerDataset {
    /// Concatenates per-utterance frames after sorting by utterance id.
    pub fn from_parts(speaker: &str, mut parts: Vec<(String, Vec<FeatureFrame>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid(format!("speaker {speaker:?} has no utterances")));
        }
        parts.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = parts.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("duplicate utterance id {:?}", w[0].0)));
        }
        let utterances = parts.iter().map(|(id, f)| (id.clone(), f.len())).collect();
        let frames = parts.into_iter().flat_map(|(_, f)| f).collect();
        Ok(Self {
            speaker: speaker.to_string(),
            utterances,
            frames,
        })
    }

    pub fn mfcc_vectors(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(|f| f.mfcc.clone()).collect()
    }
}

/// Extracts every utterance (in parallel) and concatenates them in id order.
pub fn build_speaker_dataset(
    speaker: &str,
    utterances: &[Utterance],
    config: &ExtractConfig,
) -> Result<SpeakerDataset> {
    if utterances.is_empty() {
        return Err(Error::invalid(format!("speaker {speaker:?} has no utterances")));
    }
    if let Some(u) = utterances.iter().find(|u| u.speaker != speaker) {
        return Err(Error::SpeakerMismatch {
            expected: speaker.to_string(),
            found: u.speaker.clone(),
        });
    }
    let extractor = MfccExtractor::new(&config.dsp)?;
    let parts = utterances
        .par_iter()
        .map(|u| Ok((u.id.clone(), extract_utterance(u, &extractor, config.max_gap_s)?)))
        .collect::<Result<Vec<_>>>()?;
    SpeakerDataset::from_parts(speaker, parts)
}

/// Aligned `S_x` / `S_y_test` pair plus the dataset positions they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequences {
    pub x: QuantizedSequence,
    pub y: QuantizedSequence,
    /// Index into `SpeakerDataset::frames` for each kept frame.
    pub positions: Vec<usize>,
}

/// Quantizes the dataset for one feature. Energy and F0 drop unvoiced frames
/// from both sequences in lockstep; voicing keeps every frame.
pub fn prepare_sequences(
    dataset: &SpeakerDataset,
    feature: Feature,
    model: &GmmModel,
) -> Result<PreparedSequences> {
    let positions: Vec<usize> = dataset
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| !feature.voiced_only() || f.f0_hz != 0.0)
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Err(Error::Empty(format!(
            "speaker {:?} has no frames left for feature {feature}",
            dataset.speaker
        )));
    }
    let vectors: Vec<Vec<f64>> = positions
        .iter()
        .map(|&i| dataset.frames[i].mfcc.clone())
        .collect();
    let ids = quantize::quantize_mfcc(model, &dataset.speaker, &vectors)?;
    let raw_x: Vec<i64> = ids.into_iter().map(|k| k as i64).collect();
    let raw_y = positions
        .iter()
        .map(|&i| {
            let f = &dataset.frames[i];
            match feature {
                Feature::Energy => quantize::round_quantize(f.log_energy),
                Feature::F0 => quantize::round_quantize(f.f0_hz),
                Feature::Voicing => prosody::voicing_index(f.f0_hz).map(i64::from),
            }
        })
        .collect::<Result<Vec<i64>>>()?;
    Ok(PreparedSequences {
        x: compact_alphabet(&raw_x, Source::MfccId, &dataset.speaker)?,
        y: compact_alphabet(&raw_y, feature.source(), &dataset.speaker)?,
        positions,
    })
}

fn cache_header(num_mfcc: usize) -> String {
    let mut cols = vec![
        "frame_index".to_string(),
        "center_time_s".into(),
        "log_energy".into(),
    ];
    cols.extend((1..=num_mfcc).map(|z| format!("mfcc_{z}")));
    cols.push("f0_hz".into());
    cols.push("voicing".into());
    cols.join(",")
}

/// Per-utterance feature cache: spectral columns followed by `f0_hz, voicing`.
pub fn write_feature_cache<W: Write>(mut out: W, frames: &[FeatureFrame]) -> Result<()> {
    let num_mfcc = frames.first().map_or(13, |f| f.mfcc.len());
    writeln!(out, "{}", cache_header(num_mfcc))?;
    for f in frames {
        write!(out, "{},{},{}", f.frame_index, f.center_time_s, f.log_energy)?;
        for c in &f.mfcc {
            write!(out, ",{c}")?;
        }
        writeln!(out, ",{},{}", f.f0_hz, f.voicing)?;
    }
    Ok(())
}

pub fn read_feature_cache(text: &str) -> Result<Vec<FeatureFrame>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("feature cache is empty"))?;
    let cols = header.split(',').count();
    if cols < 6 {
        return Err(Error::invalid("feature cache header too short"));
    }
    let num_mfcc = cols - 5;
    if header != cache_header(num_mfcc) {
        return Err(Error::invalid(format!("unexpected feature cache header {header:?}")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::invalid(format!("feature cache row {}: {what}", i + 1));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(bad("wrong column count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(FeatureFrame {
                frame_index: fields[0].parse().map_err(|_| bad("bad frame index"))?,
                center_time_s: num(fields[1])?,
                log_energy: num(fields[2])?,
                mfcc: fields[3..3 + num_mfcc]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Result<_>>()?,
                f0_hz: num(fields[3 + num_mfcc])?,
                voicing: fields[4 + num_mfcc].parse().map_err(|_| bad("bad voicing"))?,
            })
        })
        .collect()
}

/// Synthetic voice used by [`synth_fixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVoice {
    pub speaker: String,
    pub base_f0_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub num_utterances: usize,
    pub duration_s: f64,
    /// Target share of each utterance that is voiced.
    pub voiced_fraction: f64,
    pub sample_rate_hz: u32,
    pub voices: Vec<SyntheticVoice>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            num_utterances: 2,
            duration_s: 1.0,
            voiced_fraction: 0.6,
            sample_rate_hz: crate::dsp::DEFAULT_SAMPLE_RATE_HZ,
            voices: vec![
                SyntheticVoice {
                    speaker: "female".into(),
                    base_f0_hz: 210.0,
                },
                SyntheticVoice {
                    speaker: "male".into(),
                    base_f0_hz: 115.0,
                },
            ],
        }
    }
}

struct Synthesized {
    samples: Vec<f64>,
    labels: Vec<F0Label>,
}

/// Alternating unvoiced/voiced segments. Voiced spans are a harmonic source
/// with drifting F0 shaped by a per-segment formant; one label is emitted at
/// every glottal cycle start. Unvoiced spans are low-level noise bursts.
fn synthesize(rng: &mut ChaCha8Rng, voice: &SyntheticVoice, duration_s: f64, voiced_fraction: f64, rate: u32) -> Synthesized {
    let fs = rate as f64;
    let total = (duration_s * fs).round() as usize;
    let mut samples = vec![0.0; total];
    let mut labels = Vec::new();
    let drift_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut pos = 0usize;
    while pos < total {
        let cycle = rng.random_range(0.25..0.40) * fs;
        let unvoiced_len = ((1.0 - voiced_fraction) * cycle).round() as usize;
        let voiced_len = (voiced_fraction * cycle).round() as usize;

        let noise_amp = rng.random_range(0.005..0.04);
        let end = (pos + unvoiced_len).min(total);
        for s in &mut samples[pos..end] {
            *s = noise_amp * rng.random_range(-1.0..1.0);
        }
        pos = end;

        let end = (pos + voiced_len).min(total);
        let amp = rng.random_range(0.15..0.6);
        let formant = rng.random_range(400.0..2500.0);
        let bandwidth = rng.random_range(150.0..400.0);
        let offset = rng.random_range(-0.1..0.1);
        let ramp = (0.01 * fs) as usize;
        let mut phase = 0.0f64;
        let mut first = true;
        for i in pos..end {
            let t = i as f64 / fs;
            let f0 = voice.base_f0_hz
                * (1.0 + offset + 0.12 * (std::f64::consts::TAU * 0.8 * t + drift_phase).sin());
            if first || phase >= std::f64::consts::TAU {
                phase %= std::f64::consts::TAU;
                labels.push(F0Label { time: t, f0 });
                first = false;
            }
            let edge = (i - pos).min(end - 1 - i) as f64;
            let env = amp * (edge / ramp as f64).min(1.0);
            let mut acc = 0.0;
            let mut norm = 0.0;
            let mut h = 1.0;
            while h * f0 < 0.45 * fs && h <= 40.0 {
                let d = (h * f0 - formant) / bandwidth;
                let g = (1.0 / h) * (0.2 + 1.0 / (1.0 + d * d));
                acc += g * (h * phase).sin();
                norm += g;
                h += 1.0;
            }
            samples[i] = env * acc / norm + 0.002 * rng.random_range(-1.0..1.0);
            phase += std::f64::consts::TAU * f0 / fs;
        }
        pos = end;
    }
    Synthesized { samples, labels }
}

/// Writes a synthetic corpus (WAV + label file per utterance and a
/// `manifest.json`) under `dir`. Byte-identical for equal specs.
pub fn synth_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    if !(spec.duration_s > 0.0) || !(0.0..=1.0).contains(&spec.voiced_fraction) {
        return Err(Error::invalid("fixture needs positive duration and voiced fraction in [0, 1]"));
    }
    let mut manifest = Manifest::default();
    for voice in &spec.voices {
        let sub = dir.join(&voice.speaker);
        std::fs::create_dir_all(&sub)?;
        let mut entries = Vec::new();
        for u in 0..spec.num_utterances {
            let id = format!("{}_{:03}", voice.speaker, u + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &["fixture", &id]));
            let synth = synthesize(&mut rng, voice, spec.duration_s, spec.voiced_fraction, spec.sample_rate_hz);
            let audio = PathBuf::from(&voice.speaker).join(format!("{id}.wav"));
            let labels = PathBuf::from(&voice.speaker).join(format!("{id}.f0"));
            write_wav(&dir.join(&audio), &synth.samples, spec.sample_rate_hz)?;
            std::fs::write(dir.join(&labels), prosody::format_labels(&synth.labels))?;
            entries.push(ManifestEntry { id, audio, labels });
        }
        manifest.speakers.insert(voice.speaker.clone(), entries);
    }
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{gmm_fit, GmmOptions};

    fn frame(i: usize, f0: f64) -> FeatureFrame {
        FeatureFrame {
            frame_index: i,
            center_time_s: 0.01 + 0.01 * i as f64,
            log_energy: -3.0 + 0.4 * i as f64,
            mfcc: vec![i as f64 * 0.5, (i % 3) as f64],
            f0_hz: f0,
            voicing: u8::from(f0 != 0.0),
        }
    }

    fn ten_frames() -> SpeakerDataset {
        let f0s = [0.0, 110.2, 111.0, 0.0, 0.0, 120.6, 121.4, 0.0, 130.0, 131.0];
        let frames = f0s.iter().enumerate().map(|(i, &f)| frame(i, f)).collect();
        SpeakerDataset::from_parts("female", vec![("u1".into(), frames)]).unwrap()
    }

    fn model_for(ds: &SpeakerDataset) -> GmmModel {
        gmm_fit(&ds.mfcc_vectors(), &ds.speaker, 1, &GmmOptions { components: 2, ..Default::default() })
            .unwrap()
            .model
    }

    #[test]
    fn lockstep_filtering() {
        let ds = ten_frames();
        let model = model_for(&ds);
        let f0 = prepare_sequences(&ds, Feature::F0, &model).unwrap();
        assert_eq!(f0.x.len(), 6);
        assert_eq!(f0.y.len(), 6);
        assert_eq!(f0.positions, vec![1, 2, 5, 6, 8, 9]);
        let raw: Vec<i64> = f0.y.symbols().iter().map(|&s| f0.y.raw_values()[s as usize]).collect();
        assert_eq!(raw, vec![110, 111, 121, 121, 130, 131]);
        for (k, &p) in f0.positions.iter().enumerate() {
            let id = quantize::gmm_assign(&model, &ds.frames[p].mfcc) as i64;
            assert_eq!(f0.x.raw_values()[f0.x.symbols()[k] as usize], id);
        }

        let v = prepare_sequences(&ds, Feature::Voicing, &model).unwrap();
        assert_eq!(v.x.len(), 10);
        assert_eq!(v.y.len(), 10);

        let e = prepare_sequences(&ds, Feature::Energy, &model).unwrap();
        assert_eq!(e.y.len(), 6);
    }

    #[test]
    fn all_unvoiced_is_empty_error() {
        let frames = (0..5).map(|i| frame(i, 0.0)).collect();
        let ds = SpeakerDataset::from_parts("male", vec![("u".into(), frames)]).unwrap();
        let model = model_for(&ds);
        assert!(matches!(prepare_sequences(&ds, Feature::F0, &model), Err(Error::Empty(_))));
        assert!(prepare_sequences(&ds, Feature::Voicing, &model).is_ok());
    }

    #[test]
    fn speaker_mismatch_rejected() {
        let ds = ten_frames();
        let mut model = model_for(&ds);
        model.speaker = "male".into();
        assert!(matches!(
            prepare_sequences(&ds, Feature::Voicing, &model),
            Err(Error::SpeakerMismatch { .. })
        ));
    }

    #[test]
    fn concatenation_sorted_by_id() {
        let a = vec![frame(0, 100.0)];
        let b = vec![frame(0, 0.0), frame(1, 0.0)];
        let ds1 = SpeakerDataset::from_parts("s", vec![("b".into(), b.clone()), ("a".into(), a.clone())]).unwrap();
        let ds2 = SpeakerDataset::from_parts("s", vec![("a".into(), a), ("b".into(), b)]).unwrap();
        assert_eq!(ds1, ds2);
        assert_eq!(ds1.utterances, vec![("a".to_string(), 1), ("b".to_string(), 2)]);
        assert!(SpeakerDataset::from_parts("s", vec![]).is_err());
    }

    #[test]
    fn feature_cache_round_trip() {
        let frames: Vec<FeatureFrame> = (0..4)
            .map(|i| FeatureFrame { mfcc: vec![0.1 * i as f64 + 1e-17; 13], ..frame(i, 97.25 * i as f64) })
            .collect();
        let mut out = Vec::new();
        write_feature_cache(&mut out, &frames).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 18);
        assert_eq!(read_feature_cache(&text).unwrap(), frames);
        assert!(read_feature_cache("a,b\n").is_err());
    }

    #[test]
    fn feature_names() {
        for f in Feature::ALL {
            assert_eq!(f.to_string().parse::<Feature>().unwrap(), f);
        }
        assert!("pitch".parse::<Feature>().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_namespace() {
        let a = derive_seed(1, &["gmm", "female"]);
        assert_eq!(a, derive_seed(1, &["gmm", "female"]));
        assert_ne!(a, derive_seed(1, &["perm", "female"]));
        assert_ne!(a, derive_seed(2, &["gmm", "female"]));
        assert_ne!(derive_seed(1, &["ab", "c"]), derive_seed(1, &["a", "bc"]));
    }

    #[test]
    fn wav_errors_have_distinct_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let p16 = dir.path().join("a16k.wav");
        write_wav(&p16, &[0.0; 100], 16_000).unwrap();
        let err = load_audio(&p16, 20_000).unwrap_err();
        assert_eq!(err.audio_kind(), Some(AudioErrorKind::RateMismatch));

        let stereo = dir.path().join("st.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 20_000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_audio(&stereo, 20_000).unwrap_err().audio_kind(), Some(AudioErrorKind::Channels));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"not a wav file at all").unwrap();
        assert_eq!(load_audio(&junk, 20_000).unwrap_err().audio_kind(), Some(AudioErrorKind::UnsupportedFormat));

        let ok = dir.path().join("ok.wav");
        write_wav(&ok, &[0.5, -0.25, 0.0], 20_000).unwrap();
        let sig = load_audio(&ok, 20_000).unwrap();
        assert_eq!(sig.samples(), &[0.5, -0.25, 0.0]);
    }
}

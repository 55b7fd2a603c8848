//! Pipeline stages behind the `spt` binary.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! features/<speaker>/<utterance>.csv   per-frame features
//! models/<speaker>.gmm.json            fitted quantizer
//! sequences/<speaker>_<feature>_{x,y}.csv aligned symbols
//! reports/<speaker>_<feature>.json     test report
//! reports/<speaker>_<feature>_hist.csv null histogram
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spt_core::corpus::{
    self, derive_seed, ExtractConfig, Feature, Manifest, SpeakerDataset,
};
use spt_core::dsp::{DspConfig, MfccExtractor};
use spt_core::entropy::Estimator;
use spt_core::perm_test::{self, TestOptions, TestReport, DEFAULT_TRIALS};
use spt_core::prosody::DEFAULT_MAX_GAP_S;
use spt_core::quantize::{self, GmmModel, GmmOptions};

/// Everything a run depends on. Embedded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub trials: usize,
    pub components: usize,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub estimator: Estimator,
    /// Empty means every feature.
    pub features: Vec<Feature>,
    /// Empty means every speaker in the manifest.
    pub speakers: Vec<String>,
    pub max_gap_s: f64,
    pub threads: Option<usize>,
    pub dsp: DspConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            out_dir: PathBuf::from("out"),
            seed: 0,
            trials: DEFAULT_TRIALS,
            components: quantize::DEFAULT_COMPONENTS,
            gmm_max_iters: quantize::DEFAULT_MAX_ITERS,
            gmm_tol: quantize::DEFAULT_TOL,
            estimator: Estimator::ChaoShen,
            features: Vec::new(),
            speakers: Vec::new(),
            max_gap_s: DEFAULT_MAX_GAP_S,
            threads: None,
            dsp: DspConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.components == 0 {
            bail!("components must be at least 1");
        }
        if !(self.max_gap_s > 0.0) {
            bail!("max_gap_s must be positive");
        }
        if !(self.gmm_tol >= 0.0) {
            bail!("gmm_tol must be non-negative");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    pub fn feature_list(&self) -> Vec<Feature> {
        if self.features.is_empty() {
            Feature::ALL.to_vec()
        } else {
            let mut f = self.features.clone();
            f.sort();
            f.dedup();
            f
        }
    }

    pub fn speaker_list(&self, manifest: &Manifest) -> Result<Vec<String>> {
        if self.speakers.is_empty() {
            return Ok(manifest.speakers.keys().cloned().collect());
        }
        for s in &self.speakers {
            if !manifest.speakers.contains_key(s) {
                bail!("speaker {s:?} not found in manifest");
            }
        }
        Ok(self.speakers.clone())
    }

    fn extract_config(&self) -> ExtractConfig {
        ExtractConfig {
            dsp: self.dsp.clone(),
            max_gap_s: self.max_gap_s,
        }
    }

    fn gmm_options(&self) -> GmmOptions {
        GmmOptions {
            components: self.components,
            max_iters: self.gmm_max_iters,
            tol: self.gmm_tol,
        }
    }

    pub fn gmm_seed(&self, speaker: &str) -> u64 {
        derive_seed(self.seed, &["gmm", speaker])
    }

    pub fn perm_seed(&self, speaker: &str, feature: Feature) -> u64 {
        derive_seed(self.seed, &["perm", speaker, &feature.to_string()])
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    /// SHA-256 of the compact JSON form.
    pub fn fingerprint(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn feature_dir(&self, speaker: &str) -> PathBuf {
        self.out_dir.join("features").join(speaker)
    }

    pub fn model_path(&self, speaker: &str) -> PathBuf {
        self.out_dir.join("models").join(format!("{speaker}.gmm.json"))
    }

    pub fn report_path(&self, speaker: &str, feature: Feature) -> PathBuf {
        self.out_dir.join("reports").join(format!("{speaker}_{feature}.json"))
    }

    pub fn histogram_path(&self, speaker: &str, feature: Feature) -> PathBuf {
        self.out_dir.join("reports").join(format!("{speaker}_{feature}_hist.csv"))
    }
}

/// Writes one feature CSV per utterance. Failing utterances are reported and
/// skipped; the call errors at the end if any failed.
pub fn cmd_extract(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let manifest = Manifest::load(&config.manifest)
        .with_context(|| format!("loading manifest {}", config.manifest.display()))?;
    let extractor = MfccExtractor::new(&config.dsp)?;
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for speaker in config.speaker_list(&manifest)? {
        let dir = config.feature_dir(&speaker);
        fs::create_dir_all(&dir)?;
        for utt in manifest.utterances(&speaker)? {
            match corpus::extract_utterance(&utt, &extractor, config.max_gap_s) {
                Ok(frames) => {
                    let path = dir.join(format!("{}.csv", utt.id));
                    let file = BufWriter::new(fs::File::create(&path)?);
                    corpus::write_feature_cache(file, &frames)?;
                    written.push(path);
                }
                Err(e) => {
                    log::error!("{e}");
                    failures.push(e.to_string());
                }
            }
        }
    }
    if !failures.is_empty() {
        bail!("{} utterance(s) failed: {}", failures.len(), failures.join("; "));
    }
    Ok(written)
}

/// Loads a speaker's frames from the feature cache when every utterance has
/// one, otherwise extracts from audio.
pub fn load_dataset(config: &RunConfig, manifest: &Manifest, speaker: &str) -> Result<SpeakerDataset> {
    let utterances = manifest.utterances(speaker)?;
    let dir = config.feature_dir(speaker);
    let cached: Vec<PathBuf> = utterances
        .iter()
        .map(|u| dir.join(format!("{}.csv", u.id)))
        .collect();
    if !utterances.is_empty() && cached.iter().all(|p| p.is_file()) {
        let parts = utterances
            .iter()
            .zip(&cached)
            .map(|(u, p)| {
                let text = fs::read_to_string(p)?;
                Ok((u.id.clone(), corpus::read_feature_cache(&text)?))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(SpeakerDataset::from_parts(speaker, parts)?);
    }
    Ok(corpus::build_speaker_dataset(speaker, &utterances, &config.extract_config())?)
}

fn fit_model(config: &RunConfig, dataset: &SpeakerDataset) -> Result<GmmModel> {
    let seed = config.gmm_seed(&dataset.speaker);
    let fit = quantize::gmm_fit(&dataset.mfcc_vectors(), &dataset.speaker, seed, &config.gmm_options())
        .with_context(|| format!("fitting GMM for speaker {}", dataset.speaker))?;
    log::info!(
        "speaker {}: GMM K={} log-likelihood {:.3} after {} E-steps (converged: {})",
        dataset.speaker,
        fit.model.num_components,
        fit.model.train_log_likelihood,
        fit.log_likelihood_trace.len(),
        fit.converged
    );
    let path = config.model_path(&dataset.speaker);
    fs::create_dir_all(path.parent().expect("model path has a parent"))?;
    fit.model.save(&path)?;
    Ok(fit.model)
}

/// Fits and saves one GMM per selected speaker.
pub fn cmd_train_quantizer(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let manifest = Manifest::load(&config.manifest)?;
    let mut paths = Vec::new();
    for speaker in config.speaker_list(&manifest)? {
        let dataset = load_dataset(config, &manifest, &speaker)?;
        fit_model(config, &dataset)?;
        paths.push(config.model_path(&speaker));
    }
    Ok(paths)
}

/// Reuses a saved model only if it was trained with this config's K and seed.
fn model_for(config: &RunConfig, dataset: &SpeakerDataset) -> Result<GmmModel> {
    let path = config.model_path(&dataset.speaker);
    if path.is_file() {
        let model = GmmModel::load(&path)?;
        if model.speaker == dataset.speaker
            && model.num_components == config.components
            && model.seed == config.gmm_seed(&dataset.speaker)
            && model.dim() == config.dsp.num_mfcc
        {
            return Ok(model);
        }
        log::warn!("{} does not match the run config; retraining", path.display());
    }
    fit_model(config, dataset)
}

/// Runs every selected (speaker, feature) test and writes reports.
pub fn cmd_test(config: &RunConfig) -> Result<Vec<TestReport>> {
    config.validate()?;
    let manifest = Manifest::load(&config.manifest)?;
    let config_json = config.to_json()?;
    let fingerprint = config.fingerprint()?;
    let mut reports = Vec::new();
    for speaker in config.speaker_list(&manifest)? {
        let dataset = load_dataset(config, &manifest, &speaker)?;
        let model = model_for(config, &dataset)?;
        for feature in config.feature_list() {
            let ctx = || format!("speaker {speaker}, feature {feature}");
            let prepared = corpus::prepare_sequences(&dataset, feature, &model).with_context(ctx)?;
            let options = TestOptions {
                trials: config.trials,
                seed: config.perm_seed(&speaker, feature),
                estimator: config.estimator,
            };
            let outcome = perm_test::run_test(&prepared.x, &prepared.y, &options).with_context(ctx)?;
            let mut report = outcome.report;
            report.config = config_json.clone();
            report.config_fingerprint = fingerprint.clone();

            let report_path = config.report_path(&speaker, feature);
            fs::create_dir_all(report_path.parent().expect("report path has a parent"))?;
            report.save(&report_path)?;
            let hist = BufWriter::new(fs::File::create(config.histogram_path(&speaker, feature))?);
            outcome.null.histogram.write_csv(hist)?;
            write_sequences(config, &speaker, feature, &prepared)?;
            reports.push(report);
        }
    }
    Ok(reports)
}

fn write_sequences(
    config: &RunConfig,
    speaker: &str,
    feature: Feature,
    prepared: &corpus::PreparedSequences,
) -> Result<()> {
    let dir = config.out_dir.join("sequences");
    fs::create_dir_all(&dir)?;
    for (tag, seq) in [("x", &prepared.x), ("y", &prepared.y)] {
        let path = dir.join(format!("{speaker}_{feature}_{tag}.csv"));
        let out = BufWriter::new(fs::File::create(&path)?);
        quantize::write_sequence_csv(out, seq, &prepared.positions)?;
    }
    Ok(())
}

/// Aligned text table of test results.
pub fn summary_table(reports: &[TestReport]) -> String {
    let mut out = format!(
        "{:<12} {:<8} {:>7} {:>6} {:>6} {:>10} {:>9} {:>12}  {}\n",
        "speaker", "feature", "N", "|X|", "|Y|", "C_test", "p_count", "p_bound", "p"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<12} {:<8} {:>7} {:>6} {:>6} {:>10.4} {:>9} {:>12.3e}  {}\n",
            r.speaker,
            r.feature.to_string(),
            r.n,
            r.x_alphabet_size,
            r.y_alphabet_size,
            r.c_test,
            r.p_count,
            r.p_value_bound,
            r.p_value
        ));
    }
    out
}

/// Human-readable rendering of a saved report.
pub fn render_report(report: &TestReport) -> String {
    let s = &report.null_summary;
    format!(
        "speaker:        {}\n\
         feature:        {}\n\
         estimator:      {:?}\n\
         frames:         {} (|X| = {}, |Y| = {})\n\
         H(Y|X):         {:.6} bits\n\
         C_test:         {:.4}\n\
         null (D = {}):  min {:.4}  max {:.4}  mean {:.4}  std {:.4}\n\
         p_count:        {}\n\
         p-value bound:  {:.6e}  ({})\n\
         seed:           {}\n\
         config sha256:  {}\n\
         tool version:   {}\n",
        report.speaker,
        report.feature,
        report.estimator,
        report.n,
        report.x_alphabet_size,
        report.y_alphabet_size,
        report.h_test,
        report.c_test,
        report.trials,
        s.min,
        s.max,
        s.mean,
        s.std,
        report.p_count,
        report.p_value_bound,
        report.p_value,
        report.seed,
        report.config_fingerprint,
        report.tool_version
    )
}

pub fn cmd_report(path: &Path) -> Result<String> {
    let report = TestReport::load(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(render_report(&report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_toml() {
        let cfg: RunConfig = toml::from_str(
            r#"
            manifest = "corpus/manifest.json"
            seed = 3
            features = ["voicing", "f0"]
            [dsp]
            nfft = 1024
            "#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 100_000);
        assert_eq!(cfg.components, 40);
        assert_eq!(cfg.dsp.nfft, 1024);
        assert_eq!(cfg.dsp.num_mel_filters, 23);
        assert_eq!(cfg.feature_list(), vec![Feature::F0, Feature::Voicing]);
        cfg.validate().unwrap();
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn seeds_are_namespaced() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.gmm_seed("female"), cfg.gmm_seed("male"));
        assert_ne!(cfg.perm_seed("female", Feature::F0), cfg.perm_seed("female", Feature::Energy));
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        b.trials = 10;
        assert_ne!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        assert_eq!(a.fingerprint().unwrap().len(), 64);
    }
}

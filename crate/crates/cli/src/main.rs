use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spt_cli::RunConfig;
use spt_core::corpus::{self, Feature, FixtureSpec};

#[derive(Parser)]
#[command(name = "spt", version, about = "Spectral-prosodic independence tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-frame features for every utterance in the manifest.
    Extract(Common),
    /// Fit one GMM quantizer per speaker.
    TrainQuantizer(Common),
    /// Run the permutation tests and write reports.
    Test(Common),
    /// Generate a synthetic corpus.
    Fixture(FixtureArgs),
    /// Pretty-print a saved JSON report.
    Report { path: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus manifest (overrides the config file).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed; the SPT_SEED environment variable takes precedence.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of permutations D.
    #[arg(long)]
    trials: Option<usize>,
    /// GMM components K.
    #[arg(long)]
    components: Option<usize>,
    /// f0, energy, voicing or all.
    #[arg(long)]
    feature: Option<String>,
    /// Speaker id or all.
    #[arg(long)]
    speaker: Option<String>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    utterances: usize,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 0.6)]
    voiced_fraction: f64,
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.manifest {
            cfg.manifest = m;
        }
        if let Some(o) = self.out {
            cfg.out_dir = o;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Ok(env) = std::env::var("SPT_SEED") {
            cfg.seed = env
                .parse()
                .map_err(|_| anyhow::anyhow!("SPT_SEED must be an unsigned integer, got {env:?}"))?;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(k) = self.components {
            cfg.components = k;
        }
        match self.feature.as_deref() {
            None => {}
            Some("all") => cfg.features.clear(),
            Some(f) => cfg.features = vec![f.parse::<Feature>()?],
        }
        match self.speaker.as_deref() {
            None => {}
            Some("all") => cfg.speakers.clear(),
            Some(s) => cfg.speakers = vec![s.to_string()],
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.validate()?;
        if let Some(n) = cfg.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(common) => {
            let paths = spt_cli::cmd_extract(&common.resolve()?)?;
            println!("wrote {} feature files", paths.len());
        }
        Command::TrainQuantizer(common) => {
            for path in spt_cli::cmd_train_quantizer(&common.resolve()?)? {
                println!("{}", path.display());
            }
        }
        Command::Test(common) => {
            let reports = spt_cli::cmd_test(&common.resolve()?)?;
            print!("{}", spt_cli::summary_table(&reports));
        }
        Command::Fixture(args) => {
            std::fs::create_dir_all(&args.out)?;
            let spec = FixtureSpec {
                seed: args.seed,
                num_utterances: args.utterances,
                duration_s: args.duration,
                voiced_fraction: args.voiced_fraction,
                ..FixtureSpec::default()
            };
            let manifest = corpus::synth_fixture(&args.out, &spec)?;
            println!("{}", manifest.display());
        }
        Command::Report { path } => print!("{}", spt_cli::cmd_report(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! `rfa`: rhythm-formant analysis from the command line.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CliError, Outcome};

#[derive(Debug, Parser)]
#[command(name = "rfa", version, about = "Rhythm-formant analysis of speech recordings")]
struct Cli {
    /// TOML file with run configuration overrides.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for fold assignment and corpus synthesis.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Am,
    Fm,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Clf,
    Reg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Svm,
    Svr,
    Dt,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute AM and/or FM rhythm spectrograms of one recording.
    Spectrogram(SpectrogramArgs),
    /// Render a spectrogram CSV as a PNG heatmap.
    Render(RenderArgs),
    /// Extract feature vectors for every utterance of a manifest.
    Features(FeaturesArgs),
    /// Grid search, k-fold cross-validation and fold averaging.
    Train(TrainArgs),
    /// Evaluate a trained model on a feature CSV.
    Eval(EvalArgs),
    /// Generate synthetic test signals.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    #[arg(long)]
    pub wav: PathBuf,
    /// Diarization CSV (`start_s,end_s,speaker`).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Speaker kept from the segments file.
    #[arg(long)]
    pub speaker: Option<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: KindArg,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write the envelopes as `<utt>_<kind>_envelope.csv`.
    #[arg(long)]
    pub envelopes: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of rhythm formants N.
    #[arg(long)]
    pub n_formants: Option<usize>,
    /// DCT block order C.
    #[arg(long)]
    pub dct_order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Number of folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Model artifact (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Cross-validation report (JSON); defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Report (JSON); the table is always printed.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Two-class AM corpus with manifest.
    Corpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        n_per_class: Option<usize>,
    },
    /// Sinusoidally amplitude-modulated tone.
    AmTone {
        #[arg(long)]
        mod_hz: f64,
        #[arg(long, default_value_t = 200.0)]
        carrier_hz: f64,
        #[arg(long, default_value_t = 0.8)]
        depth: f64,
        #[arg(long, default_value_t = 10.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 16000)]
        sample_rate_hz: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Glottal-like pulse train with a constant or vibrato F0.
    PulseTrain {
        #[arg(long, default_value_t = 150.0)]
        f0_hz: f64,
        /// Vibrato rate; omit for a constant F0.
        #[arg(long)]
        vibrato_hz: Option<f64>,
        #[arg(long, default_value_t = 20.0)]
        vibrato_depth_hz: f64,
        /// Silence of `--gap-length-s` at the end of every period of this length.
        #[arg(long)]
        gap_every_s: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        gap_length_s: f64,
        #[arg(long, default_value_t = 10.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 16000)]
        sample_rate_hz: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Any signal described by a JSON spec.
    FromJson {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = commands::load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Spectrogram(a) => commands::spectrogram(&cfg, a),
        Command::Render(a) => commands::render(&cfg, a),
        Command::Features(a) => commands::features(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Synth(s) => commands::synth(&cfg, s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: kind=Usage msg={}", one_line(&e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(reason)) => {
            eprintln!("partial: {}", one_line(&reason));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: kind={} msg={}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(2)
        }
    }
}

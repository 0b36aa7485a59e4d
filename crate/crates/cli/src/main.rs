//! `vigil`: build profiles, check and repair inputs, run attacks and the
//! evaluation harness from the command line.
//!
//! Results go to standard output as one JSON object per line. Errors go to
//! standard error as `{"error": ...}` with a nonzero exit code.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "vigil",
    version,
    about = "Self-verification and recovery defense for CNN classifiers"
)]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the config keys.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// image, audio or combined.
    #[arg(long, global = true)]
    modality: Option<String>,
    /// Model file (LNCM).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Profile store (LNCP).
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,
    #[arg(long, global = true)]
    image_threshold: Option<f64>,
    #[arg(long, global = true)]
    audio_threshold: Option<f64>,
    /// Heatmap threshold as a fraction of its maximum.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Activations suppressed during audio recovery.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Correctly classified samples per class profile.
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    #[arg(long, global = true)]
    crop_size: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for eval and training (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record per-input defense time.
    #[arg(long, global = true)]
    timing: Option<bool>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        [
            ("modality", self.modality.clone()),
            ("model", path(&self.model)),
            ("profiles", path(&self.profiles)),
            ("image_threshold", self.image_threshold.map(|v| v.to_string())),
            ("audio_threshold", self.audio_threshold.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("n_samples", self.n_samples.map(|v| v.to_string())),
            ("crop_size", self.crop_size.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", path(&self.out)),
            ("workers", self.workers.map(|v| v.to_string())),
            ("timing", self.timing.map(|v| v.to_string())),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset directory (textures or spoken-command MFCCs).
    Synth {
        #[arg(long, default_value_t = 20)]
        per_class: usize,
    },
    /// Train the toy model for the configured modality on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 3e-3)]
        learning_rate: f64,
    },
    /// Build per-class reference profiles from a natural dataset.
    Profile {
        #[arg(long)]
        data: PathBuf,
        /// Only profile classes that occur in the dataset.
        #[arg(long)]
        present_only: bool,
    },
    /// Check one input; prints the detection report.
    Detect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Repair one input regardless of the verdict; `--out` saves the repaired image.
    Recover {
        #[arg(long)]
        input: PathBuf,
    },
    /// Check one input and repair it if flagged.
    Defend {
        #[arg(long)]
        input: PathBuf,
    },
    /// Attack every sample of a dataset; `--out` is the output directory.
    Attack {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        spec: AttackSpec,
    },
    /// Run the evaluation harness and print the report records.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        spec: AttackSpec,
        /// Replace the configured threshold with one calibrated on `data`
        /// at this false-positive rate.
        #[arg(long)]
        calibrate: Option<f64>,
    },
    /// Print the FLOP breakdown of the defense pipeline.
    Flops {
        /// Built-in architecture, used when no model is given.
        #[arg(long, value_enum, default_value_t = Arch::Vgg16)]
        arch: Arch,
        /// Pixels times channels repaired by interpolation.
        #[arg(long, default_value_t = 3 * 50 * 50)]
        repaired_pixels: usize,
        /// Count the recovery step.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        recover: bool,
        /// FLOPs charged per multiply-accumulate.
        #[arg(long, default_value_t = 1)]
        flops_per_mac: u64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Arch {
    Vgg16,
    ImageToy,
    AudioToy,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AttackKind {
    None,
    Patch,
    Fgsm,
    Bim,
}

#[derive(Args, Debug, Clone)]
struct AttackSpec {
    #[arg(long, value_enum, default_value_t = AttackKind::None)]
    attack: AttackKind,
    /// Patch side in pixels.
    #[arg(long, default_value_t = 12)]
    size: usize,
    /// Patch tensor to paste instead of fresh noise.
    #[arg(long)]
    patch: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    step: f64,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Target class; untargeted when absent.
    #[arg(long)]
    target: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result =
        RunConfig::load(cli.config.as_deref(), &cli.overrides.pairs()).and_then(|cfg| commands::run(&cfg, cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("{}", serde_json::json!({ "error": msg }));
            ExitCode::FAILURE
        }
    }
}

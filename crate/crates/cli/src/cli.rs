//! Command-line grammar and the resolved-configuration echo.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Clone, Debug, PartialEq)]
#[command(
    name = "eegdir",
    version,
    about = "Retention-network denoising of single-channel EEG segments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq)]
pub enum Command {
    /// Synthesize train/test dataset containers
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus a CSV loss log
    Train(TrainArgs),
    /// Denoise signals with a trained checkpoint
    Denoise(DenoiseArgs),
    /// Score a checkpoint (or the identity baseline) on a dataset
    Eval(EvalArgs),
    /// Run the built-in property suite
    Verify(VerifyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    Eog,
    Emg,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "eog")]
    pub noise: Noise,
    /// Number of clean/noise source pairs
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = -7, allow_negative_numbers = true)]
    pub snr_min: i32,
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub snr_max: i32,
    /// Samples per segment
    #[arg(long, default_value_t = 512)]
    pub len: usize,
    /// Fraction of clean sources assigned to the training split
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory; receives train.edir and test.edir
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct ModelArgs {
    /// Segment length; defaults to the dataset's
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub ffn_mult: usize,
    /// Scale scores by 1/√d and clamp retention row sums
    #[arg(long)]
    pub stabilized: bool,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct TrainArgs {
    /// Training set (EDIR)
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path (EDCK)
    #[arg(long)]
    pub out: PathBuf,
    /// CSV loss log; defaults to the checkpoint path with a .csv extension
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    /// Checkpoint cadence in epochs (0: only at the end)
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct DenoiseArgs {
    /// Checkpoint (EDCK)
    #[arg(long)]
    pub model: PathBuf,
    /// Noisy signals: an EDIR container, or a .csv with one raw signal per row
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV, one denoised signal per row in input units
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    /// Use the noisy input itself as the estimate
    Identity,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct EvalArgs {
    /// Checkpoint (EDCK); not needed with --baseline
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test set (EDIR)
    #[arg(long)]
    pub data: PathBuf,
    /// Report CSV; printed to stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    RetentionBackward,
    SwishBackward,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct VerifyArgs {
    /// Run a single suite (gradcheck, decay, retention, causality,
    /// relative-position, snr, metrics, adamw, persistence)
    #[arg(long)]
    pub only: Option<String>,
    /// Seeds per gradient check
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<Fault>,
}

fn quote(s: &str) -> String {
    let plain = !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=:,+@%".contains(c));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn path(p: &Path) -> String {
    quote(&p.to_string_lossy())
}

fn noise_name(n: Noise) -> &'static str {
    match n {
        Noise::Eog => "eog",
        Noise::Emg => "emg",
    }
}

impl Command {
    /// The full flag set of this invocation, every default spelled out, as a
    /// shell line that parses back to the same command.
    pub fn echo(&self) -> String {
        let mut a: Vec<String> = vec!["eegdir".into()];
        let mut flag = |name: &str, value: String| a.push(format!("--{name}={value}"));
        match self {
            Command::Synth(s) => {
                flag("noise", noise_name(s.noise).into());
                flag("pairs", s.pairs.to_string());
                flag("snr-min", s.snr_min.to_string());
                flag("snr-max", s.snr_max.to_string());
                flag("len", s.len.to_string());
                flag("split", s.split.to_string());
                flag("seed", s.seed.to_string());
                flag("workers", s.workers.to_string());
                flag("out", path(&s.out));
            }
            Command::Train(t) => {
                flag("data", path(&t.data));
                flag("out", path(&t.out));
                if let Some(l) = &t.log {
                    flag("log", path(l));
                }
                if let Some(len) = t.model.len {
                    flag("len", len.to_string());
                }
                flag("patch", t.model.patch.to_string());
                flag("dim", t.model.dim.to_string());
                flag("heads", t.model.heads.to_string());
                flag("layers", t.model.layers.to_string());
                flag("ffn-mult", t.model.ffn_mult.to_string());
                flag("epochs", t.epochs.to_string());
                flag("batch", t.batch.to_string());
                flag("seed", t.seed.to_string());
                flag("lr", t.lr.to_string());
                flag("beta1", t.beta1.to_string());
                flag("beta2", t.beta2.to_string());
                flag("eps", t.eps.to_string());
                flag("weight-decay", t.weight_decay.to_string());
                flag("log-every", t.log_every.to_string());
            }
            Command::Denoise(d) => {
                flag("model", path(&d.model));
                flag("input", path(&d.input));
                flag("out", path(&d.out));
                flag("batch", d.batch.to_string());
            }
            Command::Eval(e) => {
                if let Some(m) = &e.model {
                    flag("model", path(m));
                }
                flag("data", path(&e.data));
                if let Some(o) = &e.out {
                    flag("out", path(o));
                }
                if e.baseline.is_some() {
                    flag("baseline", "identity".into());
                }
                flag("workers", e.workers.to_string());
                flag("batch", e.batch.to_string());
            }
            Command::Verify(v) => {
                if let Some(o) = &v.only {
                    flag("only", quote(o));
                }
                flag("seeds", v.seeds.to_string());
            }
        }
        let sub = match self {
            Command::Synth(_) => "synth",
            Command::Train(t) if t.model.stabilized => "train --stabilized",
            Command::Train(_) => "train",
            Command::Denoise(_) => "denoise",
            Command::Eval(_) => "eval",
            Command::Verify(_) => "verify",
        };
        a.insert(1, sub.into());
        a.join(" ")
    }
}

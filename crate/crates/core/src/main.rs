use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssi3d::config::RunConfig;
use ssi3d::data::Split;
use ssi3d::harness;
use ssi3d::model::{Arch, TemporalMode};
use ssi3d::Result;

#[derive(Parser)]
#[command(
    name = "ssi3d",
    version,
    about = "Ultrasound-to-speech-parameter regression experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (containers + manifest.tsv).
    Synth(Flags),
    /// Train one model and write checkpoint, stats, history and dev report.
    Train(Flags),
    /// Evaluate a checkpoint on one split.
    Eval(Flags),
    /// Train cnn3d for each stride in --s-values plus a cnn2d baseline.
    Sweep(Flags),
    /// Print the per-layer parameter table.
    Params(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    model: Option<Arch>,
    /// Temporal stride (cnn3d only).
    #[arg(long)]
    s: Option<usize>,
    /// Temporal mode (cnn3d only).
    #[arg(long)]
    mode: Option<TemporalMode>,
    /// 32x16 frames and the reduced model variants.
    #[arg(long)]
    tiny: bool,

    /// Dataset manifest (manifest.tsv).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Normalization stats; defaults to stats.txt beside the checkpoint.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    split: Option<Split>,

    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_halvings: Option<usize>,

    /// Comma-separated strides for sweep.
    #[arg(long, value_delimiter = ',')]
    s_values: Option<Vec<usize>>,
    /// Run sweep trainings concurrently.
    #[arg(long)]
    parallel: bool,

    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_dev: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    velocity_weight: Option<f64>,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        macro_rules! set_opt {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$field = Some(v); })*
            };
        }
        set!(seed => seed, model => model, split => split, batch_size => batch_size, lr => learning_rate,
             epochs => max_epochs, max_halvings => max_halvings, s_values => s_values, frames => frames,
             n_train => n_train, n_dev => n_dev, n_test => n_test, noise_std => noise_std,
             velocity_weight => velocity_weight);
        set_opt!(out => out, threads => threads, s => s, mode => mode, data => manifest,
                 checkpoint => checkpoint, stats => stats);
        cfg.tiny |= self.tiny;
        cfg.parallel |= self.parallel;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<()> {
    let (flags, action): (Flags, fn(&RunConfig) -> Result<()>) = match command {
        Command::Synth(f) => (f, |c| harness::synth(c).map(drop)),
        Command::Train(f) => (f, |c| harness::train(c).map(drop)),
        Command::Eval(f) => (f, |c| harness::eval(c).map(drop)),
        Command::Sweep(f) => (f, |c| harness::sweep(c).map(drop)),
        Command::Params(f) => (f, |c| harness::params(c).map(drop)),
    };
    let cfg = flags.resolve()?;
    harness::with_threads(cfg.threads, || action(&cfg))?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `matinfo`: matrix information measures, sandbox training and the property suite.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use matinfo::sandbox::LossFamily;
use matinfo::spectral::KernelKind;

#[derive(Parser)]
#[command(name = "matinfo", version, about = "Matrix information measures for self-supervised representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measures of one feature CSV, or of a pair of branch CSVs.
    Measure(MeasureArgs),
    /// Per-step measures of a run directory of `step_<k>.csv` checkpoints, as TSV.
    Trajectory(TrajectoryArgs),
    /// Train a sandbox encoder and write its trajectory.
    Train(TrainArgs),
    /// Masked-model runs over a grid of `mu`, summarized as TSV.
    Sweep(SweepArgs),
    /// Randomized checks of the measure identities and inequalities.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Covariance,
    Gram,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Covariance => KernelKind::Covariance,
            KernelArg::Gram => KernelKind::Gram,
        }
    }
}

#[derive(Args)]
struct MeasureFlags {
    /// Entropy orders (comma separated or repeated).
    #[arg(long = "alpha", value_delimiter = ',', default_value = "1")]
    alphas: Vec<f64>,
    /// TCR regularizers (comma separated or repeated).
    #[arg(long = "mu", value_delimiter = ',', default_value = "1")]
    mus: Vec<f64>,
    #[arg(long, value_enum, default_value = "covariance")]
    kernel: KernelArg,
}

#[derive(Args)]
struct MeasureArgs {
    /// Feature CSV files: rows are dimensions, columns are samples.
    #[arg(required = true, num_args = 1..=2)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    flags: MeasureFlags,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrajectoryArgs {
    /// Directory with `branch1/` and `branch2/` subfolders or top-level `step_<k>.csv` files.
    dir: PathBuf,
    #[command(flatten)]
    flags: MeasureFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_loss(s: &str) -> Result<LossFamily, String> {
    LossFamily::parse(s).ok_or_else(|| {
        format!("unknown loss `{s}` (expected barlow, spectral, infonce, mae, umae or mmae)")
    })
}

/// Overrides applied on top of the config file.
#[derive(Args, Default)]
struct ConfigOverrides {
    /// TOML config file; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_loss)]
    loss: Option<LossFamily>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    /// Representation dimension.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Run directory (default: `<output root>/<loss>-seed<seed>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default run directories.
    #[arg(long, env = "MATINFO_OUT", default_value = "runs")]
    out_root: PathBuf,
    /// Skip the per-record feature dumps.
    #[arg(long)]
    no_checkpoints: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Values of mu (default: 0.1,0.5,0.75,1,1.25,1.5,3).
    #[arg(long = "mus", value_delimiter = ',')]
    mus: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trials per property.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Kernel sizes, cycled over trials.
    #[arg(long = "n", value_delimiter = ',', default_value = "2,4,8,16")]
    sizes: Vec<usize>,
    #[arg(long = "alpha", value_delimiter = ',', default_value = "0.5,1,2")]
    alphas: Vec<f64>,
    #[arg(long = "mu", value_delimiter = ',', default_value = "0.5,1,3")]
    mus: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also push a deliberately indefinite matrix through the sanitizer.
    #[arg(long)]
    inject_non_psd: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Measure(a) => commands::measure(a),
        Command::Trajectory(a) => commands::trajectory(a),
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

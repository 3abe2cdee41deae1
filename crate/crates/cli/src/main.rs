mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use h2pinn::inference::{BenchMode, Precision};

/// Hydrogen-crossover prediction with physics-informed networks.
#[derive(Debug, Parser)]
#[command(name = "h2pinn", version, about)]
struct Cli {
    /// Config file (TOML, or JSON by extension); falls back to $H2PINN_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an oracle-labelled synthetic dataset.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spline-augment a dataset under the physics constraints.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit the cathode solubility on the training partition and print a [physics] section.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Also write the section to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one model; writes model.ckpt and train_report.json.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Calibrate the cathode solubility on the training partition first.
        #[arg(long)]
        calibrate: bool,
    },
    /// Repeated stratified k-fold cross-validation.
    Crossval {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated physics weights to compare (default: the training weight).
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Train a deep ensemble and report its calibration and sensitivities.
    Ensemble {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        members: Option<usize>,
        #[arg(long)]
        calibrate: bool,
    },
    /// Predict from a checkpoint file or ensemble directory.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV in the dataset schema; the label column may be blank.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        fusion_alpha: Option<f64>,
        #[arg(long)]
        no_fusion: bool,
        #[arg(long)]
        no_clamp: bool,
    },
    /// Network vs PINN vs fusion beyond the training pressure range.
    Extrapolate {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Inference latency benchmark.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
        /// Write bench.json here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Summarize the result files of a run directory as Markdown.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Physics weight β in [0, 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "h2pinn-out")]
    output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Batch100,
}

impl From<ModeArg> for BenchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => BenchMode::Single,
            ModeArg::Batch100 => BenchMode::Batch100,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F64,
    F32,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F64 => Precision::F64,
            PrecisionArg::F32 => Precision::F32,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed stdout (e.g. piped into `head`) is not a failure
        Err(e) if e.chain().any(is_broken_pipe) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<h2pinn::Error>().map_or("error", h2pinn::Error::kind);
            let body = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            let _ = writeln!(std::io::stderr(), "{body}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &(dyn std::error::Error + 'static)) -> bool {
    e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

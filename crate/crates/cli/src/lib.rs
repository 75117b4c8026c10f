//! `eegwgan` command-line pipeline: ingest, train, generate, evaluate,
//! benchmark and self-check.
//!
//! Exit codes: 0 success, 1 verification or runtime failure, 2 usage or
//! input error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use config::Preset;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failure(String),
    #[error(transparent)]
    Core(#[from] eegwgan::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        use eegwgan::Error as E;
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Failure(_) => 1,
            CliError::Core(E::NonFinite { .. } | E::Tensor(_) | E::UntrainedClassifier) => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eegwgan", version, about = "EEG synthesis with a gradient-penalty Wasserstein GAN")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file with flat dotted keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base preset; defaults to the file's preset, then `desk`.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Seed for every random stream (training, generation, synthesis, benchmark).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads; 1 runs single-threaded.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse BCI2000 EDF runs into normalized eyes-open and eyes-closed archives.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        /// Newline-separated subject ids, `#` comments allowed.
        #[arg(long)]
        subjects: PathBuf,
    },
    /// Write a seeded sine-plus-noise dataset archive.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Train a WGAN-GP on a dataset archive.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Sample signals from a checkpoint into a dataset archive.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Welch PSD of real and (optionally) generated data on one frequency grid.
    EvalPsd {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: Option<PathBuf>,
    },
    /// Fréchet distance in the feature space of a CNN classifier.
    EvalFid {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        /// Second-class data used to train the feature classifier.
        #[arg(long, required_unless_present = "classifier")]
        contrast: Option<PathBuf>,
        /// Previously saved feature classifier.
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
    /// Interpolated scalp map of a per-channel metric.
    EvalTopomap {
        #[arg(long)]
        data: PathBuf,
    },
    /// Band powers per channel and for occipital and frontal groups.
    EvalBands {
        /// One or more dataset archives.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
    },
    /// Classifier accuracy with and without generated training data.
    Bench {
        #[arg(long)]
        open: PathBuf,
        #[arg(long)]
        closed: PathBuf,
        #[arg(long)]
        gen_open: PathBuf,
        #[arg(long)]
        gen_closed: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Finite-difference check of every autodiff op and the penalty composite.
    Gradcheck {
        /// Random configurations per op.
        #[arg(long, default_value_t = 20)]
        configs: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

impl Command {
    /// Per-command flags expressed as config overrides.
    fn overrides(&self) -> Vec<(String, Value)> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        match self {
            Command::Synth { n, freq } => {
                put("synth.n", n.map(Value::from));
                put("synth.freq", freq.map(Value::from));
            }
            Command::Train { iterations, .. } => put("train.iterations", iterations.map(Value::from)),
            Command::Generate { n, .. } => put("generate.n", n.map(Value::from)),
            Command::Bench { trials, ratio, .. } => {
                put("bench.trials", trials.map(Value::from));
                put("bench.ratio", ratio.map(Value::from));
            }
            _ => {}
        }
        o
    }
}

fn parse_overrides(g: &GlobalArgs, cmd: &Command) -> Result<Vec<(String, Value)>, CliError> {
    let mut o = Vec::new();
    if let Some(seed) = g.seed {
        for k in ["train.seed", "generate.seed", "synth.seed", "fid.seed", "bench.seed"] {
            o.push((k.to_string(), Value::from(seed)));
        }
    }
    o.extend(cmd.overrides());
    for s in &g.set {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        o.push((k.trim().to_string(), config::parse_value(v.trim())));
    }
    Ok(o)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    init_logging(cli.global.verbose);
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    let overrides = parse_overrides(&cli.global, &cli.command)?;
    let cfg = config::resolve(cli.global.preset, cli.global.config.as_deref(), &overrides)?;
    commands::dispatch(&cfg, cli.global.out.as_deref(), &cli.command)
}

/// Entry point shared by the binary: parses `args`, runs, and maps the
/// outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `xdr`: generate synthetic features, train and evaluate regression heads,
//! run gradient checks and the ordering benchmark.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data, format or
//! runtime error, 3 failed assertion (gradcheck or table1).

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "xdr", version, about = "Cross-domain feature adaptation for food energy regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic train/test dataset.
    GenSynth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one head variant and write a checkpoint per epoch.
    Train {
        #[arg(long)]
        variant: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoints kept on disk (0 keeps all). Defaults to the config's eval_window.
        #[arg(long)]
        keep_last: Option<usize>,
    },
    /// Average metrics over the last `window` checkpoints.
    Eval {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and head.
    Gradcheck {
        #[arg(long)]
        variant: Option<String>,
        /// Feature widths as `m,f`.
        #[arg(long, default_value = "6,6")]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Predict kCal for one pair of feature files.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// The x_m file, then the x_f file.
        #[arg(long, num_args = 2, value_names = ["XM", "XF"])]
        features: Vec<PathBuf>,
    },
    /// Train all six variants on the synthetic benchmark per seed and check the ordering.
    Table1 {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, default_value = "7,11,13,17,19")]
        seeds: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenSynth { config, out } => commands::gen_synth(config.as_deref(), &out),
        Command::Train { variant, data, config, out, keep_last } => {
            commands::train(&variant, &data, config.as_deref(), &out, keep_last)
        }
        Command::Eval { checkpoints, data, window, report, errors } => {
            commands::eval(&checkpoints, &data, window, report.as_deref(), errors.as_deref())
        }
        Command::Gradcheck { variant, dims, seed } => commands::gradcheck(variant.as_deref(), &dims, seed),
        Command::Predict { checkpoint, features } => commands::predict(&checkpoint, &features[0], &features[1]),
        Command::Table1 { config, out, seeds } => commands::table1(config.as_deref(), &out, &seeds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

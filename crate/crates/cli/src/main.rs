//! `dsk`: command-line front end for discriminative Stein kernels.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or I/O error,
//! 3 a solver did not converge.

mod commands;
mod io;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use commands::{bench, bias, compare, eval, extract, gradcheck, synth, train, wishart};

#[derive(Parser, Debug)]
#[command(name = "dsk", version, about = "Discriminative Stein kernels for SPD matrices")]
struct Cli {
    /// TOML file of default flag values; flags given on the command line win.
    ///
    /// Keys are long flag names. Top-level keys apply to every command, a
    /// `[<command>]` table only to that command.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a two-class Wishart task.
    Synth(synth::Args),
    /// Covariance descriptors from a grid of patches in PGM images.
    Extract(extract::Args),
    /// Select θ and learn the eigenvalue adjustment on a dataset.
    Train(train::Args),
    /// Accuracy of a learned model, optionally over repeated splits against a baseline.
    Eval(eval::Args),
    /// Accuracy of the baseline metrics and kernels.
    Compare(compare::Args),
    /// Similarity-matrix timing per method and dimension.
    Bench(bench::Args),
    /// Analytic against finite-difference gradients of the criteria.
    Gradcheck(gradcheck::Args),
    /// Repeated-split comparison of DSK and the Stein kernel on Wishart tasks.
    Wishart(wishart::Args),
    /// Bias of sample-covariance eigenvalues.
    Bias(bias::Args),
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Exit(pub u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Extract(a) => extract::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Compare(a) => compare::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::Wishart(a) => wishart::run(a),
        Command::Bias(a) => bias::run(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<dsk::Error>() {
            let mut e = e;
            while let dsk::Error::PairFailed(_, _, inner) = e {
                e = inner;
            }
            if matches!(e, dsk::Error::NotConverged { .. }) {
                return 3;
            }
        }
    }
    2
}

fn args_with_config() -> anyhow::Result<Vec<OsString>> {
    let args: Vec<OsString> = std::env::args_os().collect();
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config = None;
    let mut i = 1;
    while i < strings.len() {
        if strings[i] == "--config" {
            config = strings.get(i + 1).cloned();
        } else if let Some(path) = strings[i].strip_prefix("--config=") {
            config = Some(path.to_string());
        }
        i += 1;
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    io::merge_config(&strings, &text).with_context(|| format!("in config {path}"))
}

fn main() -> ExitCode {
    let args = match args_with_config() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code(&e);
            if e.downcast_ref::<Exit>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}

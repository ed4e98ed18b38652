//! `mixcomp` command-line front end.
//!
//! Exit codes: 0 ok, 1 diagnostic failure or internal error, 2 parse error,
//! 3 validation error, 4 resource cap exceeded, 5 I/O error.

pub mod files;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::compress::{
    constant_scheme, converse_diagnostic, identity_scheme, rate_sweep_with, SweepMode, TypicalParts,
};
use crate::kidecomp::{gen_planted, ki_decompose, strip, PlantedSpec};
use crate::matcore::DEFAULT_TOL;
use crate::Error;

use files::{oracle_path, parse_block_spec, read_ensemble, write_text, EnsembleFile, OracleFile};
use report::{sweep_csv, to_json, AnalysisReport, DiagnoseReport};

/// Environment variable overriding the default structural tolerance.
pub const TOL_ENV: &str = "KI_TOL";

#[derive(Debug)]
pub enum Failure {
    Parse(String),
    Io(String),
    Lib(Error),
    /// A diagnostic ran but its inequalities did not hold.
    Check,
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Io(_) => 5,
            Failure::Check => 1,
            Failure::Lib(err) => match err {
                Error::Validation(_) | Error::DimensionMismatch { .. } => 3,
                Error::CapExceeded(_) => 4,
                Error::Numerical(_) | Error::Internal(_) => 1,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Lib(err)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Parse(msg) => write!(f, "parse error: {msg}"),
            Failure::Io(msg) => write!(f, "i/o error: {msg}"),
            Failure::Lib(err) => write!(f, "{err}"),
            Failure::Check => write!(f, "diagnostic inequalities violated"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mixcomp", version, about = "Blind compression rates of mixed-state ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    MonteCarlo,
    Auto,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Typical,
    Identity,
    Constant,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose an ensemble and report entropies, I_R and the block structure.
    Analyze {
        path: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Sweep typical codecs over block lengths and rates; CSV on stdout.
    Simulate {
        path: PathBuf,
        #[arg(long = "N-list", visible_alias = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        rates: Vec<f64>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Per-site converse diagnostic of a scheme on the stripped ensemble.
    Diagnose {
        path: PathBuf,
        #[arg(long = "N", visible_alias = "n")]
        n: usize,
        #[arg(long, allow_negative_numbers = true)]
        rate: Option<f64>,
        #[arg(long, value_enum, default_value = "typical")]
        scheme: SchemeArg,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Write a planted ensemble and its oracle file.
    Gen {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        signals: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Ambient dimension, at least the planted support.
        #[arg(long)]
        dim: Option<usize>,
    },
}

/// Runs the CLI on `args` (including the program name), writing results to
/// `out` and messages to stderr. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(failure) => {
            if !matches!(failure, Failure::Check) {
                eprintln!("mixcomp: {failure}");
            }
            failure.code()
        }
    }
}

fn tolerance(flag: Option<f64>) -> Result<f64, Failure> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(text) => text
                .trim()
                .parse()
                .map_err(|_| Failure::Parse(format!("{TOL_ENV}={text:?} is not a number")))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Failure::Lib(Error::Validation(format!(
            "tolerance must lie in (0, 1), got {tol}"
        ))));
    }
    Ok(tol)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|err| Failure::Io(format!("cannot write output: {err}")))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Analyze { path, tol } => {
            let tol = tolerance(tol)?;
            let e = read_ensemble(&path)?;
            emit(out, &to_json(&AnalysisReport::new(&e, tol)?))
        }
        Command::Simulate { path, n_list, rates, mode, samples, seed, tol } => {
            let tol = tolerance(tol)?;
            let mode = match (mode, seed) {
                (ModeArg::Exact, _) => SweepMode::Exact,
                (ModeArg::MonteCarlo, Some(seed)) => SweepMode::MonteCarlo { samples, seed },
                (ModeArg::MonteCarlo, None) => {
                    return Err(Failure::Parse("--mode monte-carlo requires --seed".into()))
                }
                (ModeArg::Auto, seed) => SweepMode::Auto { mc: seed.map(|s| (samples, s)) },
            };
            let e = read_ensemble(&path)?;
            let parts = TypicalParts::stripped_with_tol(&e, tol)?;
            let rows = rate_sweep_with(&parts, &e, &n_list, &rates, mode)?;
            emit(out, &sweep_csv(&rows))
        }
        Command::Diagnose { path, n, rate, scheme, tol } => {
            let tol = tolerance(tol)?;
            let e = read_ensemble(&path)?;
            let reduced = strip(&ki_decompose(&e, tol)?, &e)?;
            let (name, built) = match scheme {
                SchemeArg::Typical => {
                    let rate = rate.ok_or_else(|| Failure::Parse("--rate is required for the typical scheme".into()))?;
                    ("typical", TypicalParts::stripped_with_tol(&reduced, tol)?.codec(n, rate)?)
                }
                SchemeArg::Identity => ("identity", identity_scheme(&reduced, n)?),
                SchemeArg::Constant => ("constant", constant_scheme(&reduced, n)?),
            };
            let converse = converse_diagnostic(&built, &reduced)?;
            let pass = converse.pass;
            let report = DiagnoseReport {
                scheme: name.to_string(),
                requested_rate: rate.filter(|_| matches!(scheme, SchemeArg::Typical)),
                reduced_dim: reduced.dim(),
                converse,
            };
            emit(out, &to_json(&report))?;
            if pass {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
        Command::Gen { spec, signals, seed, out: path, dim } => {
            let blocks = parse_block_spec(&spec).map_err(Failure::Parse)?;
            let planted = PlantedSpec { blocks, signals, ambient_dim: dim };
            let (e, d) = gen_planted(&planted, seed)?;
            let ensemble_text = serde_json::to_string(&EnsembleFile::from_ensemble(&e))
                .expect("ensemble file serializes")
                + "\n";
            let oracle = to_json(&OracleFile::new(seed, &e, &d)?);
            let oracle_at = oracle_path(&path);
            write_text(&path, &ensemble_text)?;
            write_text(&oracle_at, &oracle)?;
            emit(out, &format!("{}\n{}\n", path.display(), oracle_at.display()))
        }
    }
}

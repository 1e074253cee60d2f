//! `bicap`: capacities, suites and counterexamples from the command line.
//!
//! Exit codes: 0 ok, 2 input error, 3 non-certified numerics, 4 invariant
//! violation. Reports are deterministic functions of the flags and seed.

mod merge;
mod suites;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bicap::capacity::{capacity, certify, CapacityProblemSpec};
use bicap::staircase::{build_staircase, domination_failure, StaircaseConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bicap", version, about = "Potential theory on dyadic bitrees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct Flags {
    /// Tree depth L.
    #[arg(long, global = true, default_value_t = 5)]
    pub depth: u32,
    /// Solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Staircase base b.
    #[arg(long, global = true, default_value_t = 20)]
    pub base: u32,
    /// Staircase steps n.
    #[arg(long, global = true, default_value_t = 40)]
    pub steps: u32,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub delta: f64,
    /// Number of random instances.
    #[arg(long, global = true, default_value_t = 50)]
    pub count: usize,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a capacity problem given as JSON.
    Cap { set_file: PathBuf },
    /// Run a verification battery.
    Suite {
        name: SuiteName,
        /// Atom list (JSON) for the carleson suite; the uniform grid otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build the staircase on which the maximum principle fails.
    Counterexample {
        /// Same as --out.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Concatenate CSV reports with a source column.
    ReportMerge {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteName {
    Sci,
    Rearrange,
    Maxprinciple,
    Carleson,
    Oracles,
}

/// Everything that determines a report.
#[derive(Serialize)]
pub struct RunConfig<'a> {
    pub command: String,
    #[serde(flatten)]
    pub flags: &'a Flags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

pub enum Failure {
    Input(anyhow::Error),
    NotCertified(String),
    Violation(String),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::NotCertified(_) => 3,
            Failure::Violation(_) => 4,
            Failure::Internal(_) => 1,
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

pub fn input_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

pub fn internal<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Internal(e.into())
}

/// Writes `text` to `out`, or stdout.
pub fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(internal),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(internal),
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig<'a>,
    #[serde(flatten)]
    result: T,
}

pub fn emit_json<T: Serialize>(config: &RunConfig, out: Option<&Path>, result: T) -> Outcome {
    let mut text = serde_json::to_string_pretty(&Report { config, result }).map_err(internal)?;
    text.push('\n');
    emit(out, &text)
}

fn cmd_cap(flags: &Flags, path: &Path) -> Outcome {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(input_err)?;
    let mut spec: CapacityProblemSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(input_err)?;
    if flags.max_iters.is_some() {
        spec.max_iters = flags.max_iters;
    }
    if spec.tol.is_none() {
        spec.tol = Some(flags.tol);
    }
    let problem = spec.into_problem().map_err(input_err)?;
    let result = capacity(&problem).map_err(internal)?;
    let certificate = certify(&result, &problem.target).map_err(internal)?;

    #[derive(Serialize)]
    struct CapOut<'a> {
        #[serde(flatten)]
        result: bicap::capacity::CapacityReport,
        certificate: &'a bicap::capacity::Certificate,
    }
    let config = RunConfig { command: "cap".into(), flags, input: Some(path.display().to_string()) };
    emit_json(&config, flags.out.as_deref(), CapOut { result: result.report(), certificate: &certificate })?;
    if !result.certified || !certificate.holds(problem.tol.max(1e-6)) {
        return Err(Failure::NotCertified(format!("duality gap {:.3e} after {} iterations", result.gap, result.iterations)));
    }
    Ok(())
}

fn cmd_counterexample(flags: &Flags, report: Option<&Path>) -> Outcome {
    let config = StaircaseConfig::new(flags.base, flags.steps).map_err(input_err)?;
    let staircase = build_staircase(config).map_err(internal)?;
    let domination = flags.lambda.map(domination_failure).transpose().map_err(input_err)?;

    #[derive(Serialize)]
    struct Out {
        staircase: bicap::staircase::Staircase,
        #[serde(skip_serializing_if = "Option::is_none")]
        domination: Option<bicap::staircase::DominationFailure>,
    }
    let run = RunConfig { command: "counterexample".into(), flags, input: None };
    emit_json(&run, report.or(flags.out.as_deref()), Out { staircase, domination })
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("BICAP_THREADS") {
        let n: usize = v.parse().with_context(|| format!("BICAP_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run = || -> Outcome {
        configure_threads().map_err(input_err)?;
        match &cli.command {
            Command::Cap { set_file } => cmd_cap(&cli.flags, set_file),
            Command::Suite { name, input } => suites::run(*name, &cli.flags, input.as_deref()),
            Command::Counterexample { report } => cmd_counterexample(&cli.flags, report.as_deref()),
            Command::ReportMerge { paths } => merge::merge(paths, cli.flags.out.as_deref()),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("input error: {e:#}"),
                Failure::NotCertified(m) => eprintln!("not certified: {m}"),
                Failure::Violation(m) => eprintln!("invariant violation: {m}"),
                Failure::Internal(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

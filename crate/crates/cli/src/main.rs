//! `ruelle`: runs one experiment per invocation from a JSON config.
//!
//! Exit codes: 0 on success, 2 when a contraction or tail premise fails,
//! 1 on any other error.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use commands::Ctx;
use report::Writer;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("premise violated: {0}")]
    Premise(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Library(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Premise(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "ruelle", version, about = "Transfer operators and Gibbs measures for weighted shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Candidates per particle and step.
    #[arg(long)]
    candidates: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Leave timestamps out of reports.
    #[arg(long)]
    reproducible: bool,
    /// Output directory; overrides RUELLE_OUT_DIR and the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Weight analytics and dynamics flags.
    Classify(Common),
    /// Leading eigenpair by the discounted solver, checked by power iteration.
    Eigen(Common),
    /// Normalized potential and its residual.
    Normalize(Common),
    /// Particle approximation of the Gibbs measure.
    Gibbs(Common),
    /// W̃ between two JSONL clouds.
    Wasserstein {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
    },
    /// Contraction experiments on Dirac pairs.
    Contract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        local: bool,
        #[arg(long)]
        global: bool,
    },
    /// Adapted-tails checks and tail contraction factors.
    Tails(Common),
    /// Grid solver against the exact finite reduction.
    OracleCompare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Classify(c)
            | Command::Eigen(c)
            | Command::Normalize(c)
            | Command::Gibbs(c)
            | Command::Tails(c)
            | Command::OracleCompare(c) => c,
            Command::Wasserstein { common, .. } | Command::Contract { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Classify(_) => "classify",
            Command::Eigen(_) => "eigen",
            Command::Normalize(_) => "normalize",
            Command::Gibbs(_) => "gibbs",
            Command::Wasserstein { .. } => "wasserstein",
            Command::Contract { .. } => "contract",
            Command::Tails(_) => "tails",
            Command::OracleCompare(_) => "oracle-compare",
        }
    }
}

fn overrides(c: &Common) -> Value {
    let mut o = serde_json::Map::new();
    if let Some(v) = c.seed {
        o.insert("seed".into(), json!(v));
    }
    if let Some(v) = c.particles {
        o.insert("particles".into(), json!(v));
    }
    if let Some(v) = c.iters {
        o.insert("iters".into(), json!(v));
    }
    if let Some(v) = c.candidates {
        o.insert("candidates".into(), json!(v));
    }
    Value::Object(o)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let common = cli.command.common().clone();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let loaded = config::load(&common.config)?;
    let mut cfg = loaded.config;
    if let Some(s) = common.seed {
        cfg.gibbs.seed = Some(s);
    }
    if let Some(n) = common.particles {
        cfg.gibbs.particles = n;
        cfg.contract.particles = n;
    }
    if let Some(n) = common.iters {
        cfg.gibbs.iters = n;
    }
    if let Some(k) = common.candidates {
        if k == 0 {
            return Err(CliError::ConfigInvalid {
                path: "--candidates".into(),
                message: "must be at least 1".into(),
            });
        }
        cfg.gibbs.candidates = k;
    }
    let dir = common
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("RUELLE_OUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.outputs.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx {
        cfg,
        sha256: loaded.sha256,
        overrides: overrides(&common),
        writer: Writer::new(dir, common.reproducible)?,
    };
    let stochastic = matches!(cli.command, Command::Gibbs(_) | Command::Wasserstein { .. } | Command::Contract { .. });
    let outcome = match &cli.command {
        Command::Classify(_) => commands::classify(&ctx)?,
        Command::Eigen(_) => commands::eigen(&ctx)?,
        Command::Normalize(_) => commands::normalize(&ctx)?,
        Command::Gibbs(_) => commands::gibbs(&ctx)?,
        Command::Wasserstein { left, right, .. } => commands::wasserstein(&ctx, left, right)?,
        Command::Contract { local, global, .. } => {
            if !local && !global {
                return Err(CliError::ConfigInvalid {
                    path: "--local/--global".into(),
                    message: "choose at least one experiment".into(),
                });
            }
            commands::contract(&ctx, *local, *global)?
        }
        Command::Tails(_) => commands::tails(&ctx)?,
        Command::OracleCompare(_) => commands::oracle_compare(&ctx)?,
    };
    let seed = if stochastic { ctx.cfg.gibbs.seed } else { None };
    ctx.emit(cli.command.name(), seed, &outcome.report)?;
    Ok(outcome.premise_violated)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("ruelle: premise violated, see the report");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ruelle: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

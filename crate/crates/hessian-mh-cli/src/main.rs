//! `hmh` — experiment CLI around the `hessian-mh` library.
//!
//! Subcommands: `sweep` (efficiency metrics over an n-grid), `rate-study`
//! (Gaussian-approximation decay table), `pushforward-check` (finite-chain
//! exactness fuzz), and `map` (mode and curvature of one model at one n).
//!
//! Flags override the optional `--config` file, which uses `key = value`
//! lines mirroring the flag names. Exit codes: 0 success, 1 assertion or
//! chain failure, 2 configuration error.

// the `!(x > 0)` guard pattern rejects NaN inputs as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use hessian_mh::catalog;
use hessian_mh::error::Error;
use hessian_mh::experiments::{
    parse_key_values, run_pushforward_check, run_rate_study, run_sweep, sweep_has_errors,
    write_csv, ExperimentConfig, ProposalKind, ProposalSpec, PushforwardConfig,
};
use hessian_mh::laplace::laplace_approximation;

#[derive(Parser)]
#[command(name = "hmh", version, about = "Hessian-preconditioned Metropolis-Hastings experiments")]
struct Cli {
    /// Key-value configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Acceptance-rate and jump-distance sweep over an n-grid.
    Sweep(CommonArgs),
    /// Hellinger/TV decay of the Gaussian approximation over an n-grid.
    RateStudy(CommonArgs),
    /// Exact finite-chain transport fuzz suite (JSON report).
    PushforwardCheck(PushforwardArgs),
    /// Print the mode, curvature core and covariance of a model at one n.
    Map(MapArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Catalog model name.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated concentration grid, e.g. 1,100,10000.
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    /// Proposal kind: rw-hessian, pcn-modified, rw-iso or pcn.
    #[arg(long)]
    proposal: Option<String>,
    /// Stepsize parameter s.
    #[arg(long)]
    step: Option<f64>,
    /// Recorded chain length per replica.
    #[arg(long)]
    steps: Option<usize>,
    /// Discarded transient length.
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    /// Comma-separated replica seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Clone, Default)]
struct PushforwardArgs {
    /// Number of fuzz cases.
    #[arg(long)]
    cases: Option<usize>,
    /// Fuzz seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (json only).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Clone)]
struct MapArgs {
    #[arg(long)]
    model: Option<String>,
    /// Concentration level.
    #[arg(long)]
    n: Option<f64>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file_settings = match load_settings(cli.config.as_deref()) {
        Ok(s) => s,
        Err(e) => return fail(&e, 2),
    };
    let result = match cli.command {
        Command::Sweep(args) => cmd_sweep(args, &file_settings),
        Command::RateStudy(args) => cmd_rate_study(args, &file_settings),
        Command::PushforwardCheck(args) => cmd_pushforward(args, &file_settings),
        Command::Map(args) => cmd_map(args, &file_settings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => fail(&msg, 2),
        Err(CliError::Assertion(msg)) => fail(&msg, 1),
    }
}

fn fail(message: &str, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

enum CliError {
    Config(String),
    Assertion(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) => CliError::Config(e.to_string()),
            other => CliError::Assertion(other.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn load_settings(path: Option<&std::path::Path>) -> Result<HashMap<String, String>, String> {
    let Some(path) = path else {
        return Ok(HashMap::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let pairs = parse_key_values(&text).map_err(|e| e.to_string())?;
    Ok(pairs.into_iter().collect())
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|tok| tok.trim())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|e| CliError::Config(format!("bad {what} entry '{tok}': {e}")))
        })
        .collect()
}

/// Builds the experiment configuration from flags over file settings over
/// defaults.
fn resolve_config(
    args: &CommonArgs,
    settings: &HashMap<String, String>,
) -> Result<ExperimentConfig, CliError> {
    let model = args
        .model
        .clone()
        .or_else(|| settings.get("model").cloned())
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    let mut cfg = ExperimentConfig::new(model);
    if let Some(text) = args.n_grid.clone().or_else(|| settings.get("n-grid").cloned()) {
        cfg.n_grid = parse_list(&text, "n-grid")?;
    }
    let kind_text = args
        .proposal
        .clone()
        .or_else(|| settings.get("proposal").cloned());
    let step = args
        .step
        .or_else(|| settings.get("step").and_then(|s| s.parse().ok()));
    if kind_text.is_some() || step.is_some() {
        let kind = ProposalKind::from_str(
            kind_text.as_deref().unwrap_or("rw-hessian"),
        )?;
        cfg.proposals = vec![ProposalSpec {
            kind,
            step: step.unwrap_or(match kind {
                ProposalKind::PcnModified | ProposalKind::Pcn => 0.6,
                _ => 1.0,
            }),
        }];
    }
    if let Some(steps) = args
        .steps
        .or_else(|| settings.get("steps").and_then(|s| s.parse().ok()))
    {
        cfg.steps = steps;
    }
    if let Some(burn_in) = args
        .burn_in
        .or_else(|| settings.get("burn-in").and_then(|s| s.parse().ok()))
    {
        cfg.burn_in = burn_in;
    }
    if let Some(text) = args.seeds.clone().or_else(|| settings.get("seeds").cloned()) {
        cfg.seeds = parse_list(&text, "seeds")?;
    }
    Ok(cfg)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn resolve_format(
    flag: &Option<String>,
    settings: &HashMap<String, String>,
    default: Format,
) -> Result<Format, CliError> {
    let text = flag.clone().or_else(|| settings.get("format").cloned());
    match text.as_deref() {
        None => Ok(default),
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some(other) => Err(CliError::Config(format!(
            "unknown format '{other}'; expected csv or json"
        ))),
    }
}

fn resolve_out(flag: &Option<PathBuf>, settings: &HashMap<String, String>) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| settings.get("out").map(PathBuf::from))
}

fn emit<T: serde::Serialize>(
    rows: &[T],
    format: Format,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(rows, &mut buf).map_err(|e| CliError::Config(e.to_string()))?;
            buf
        }
        Format::Json => {
            let mut buf = serde_json::to_vec_pretty(rows)
                .map_err(|e| CliError::Config(e.to_string()))?;
            buf.push(b'\n');
            buf
        }
    };
    write_bytes(&bytes, out)
}

fn write_bytes(bytes: &[u8], out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

fn cmd_sweep(args: CommonArgs, settings: &HashMap<String, String>) -> CliResult {
    let cfg = resolve_config(&args, settings)?;
    let format = resolve_format(&args.format, settings, Format::Csv)?;
    let rows = run_sweep(&cfg)?;
    emit(&rows, format, resolve_out(&args.out, settings).as_ref())?;
    if sweep_has_errors(&rows) {
        return Err(CliError::Assertion(
            "one or more grid cells failed; see the error column".into(),
        ));
    }
    Ok(())
}

fn cmd_rate_study(args: CommonArgs, settings: &HashMap<String, String>) -> CliResult {
    let cfg = resolve_config(&args, settings)?;
    let format = resolve_format(&args.format, settings, Format::Csv)?;
    let rows = run_rate_study(&cfg)?;
    emit(&rows, format, resolve_out(&args.out, settings).as_ref())
}

fn cmd_pushforward(args: PushforwardArgs, settings: &HashMap<String, String>) -> CliResult {
    let format = resolve_format(&args.format, settings, Format::Json)?;
    if format != Format::Json {
        return Err(CliError::Config(
            "pushforward-check reports are JSON only".into(),
        ));
    }
    let cases = args
        .cases
        .or_else(|| settings.get("cases").and_then(|s| s.parse().ok()))
        .unwrap_or(200);
    let seed = args
        .seed
        .or_else(|| settings.get("seed").and_then(|s| s.parse().ok()))
        .unwrap_or(7);
    if cases == 0 {
        return Err(CliError::Config("cases must be positive".into()));
    }
    let report = run_pushforward_check(PushforwardConfig { cases, seed });
    let mut bytes =
        serde_json::to_vec_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(&bytes, resolve_out(&args.out, settings).as_ref())?;
    if !report.pass {
        return Err(CliError::Assertion(format!(
            "fuzz suite failed: {}",
            report.failure.unwrap_or_else(|| "residuals exceeded".into())
        )));
    }
    Ok(())
}

fn cmd_map(args: MapArgs, settings: &HashMap<String, String>) -> CliResult {
    let model = args
        .model
        .clone()
        .or_else(|| settings.get("model").cloned())
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    let n = args
        .n
        .or_else(|| settings.get("n").and_then(|s| s.parse().ok()))
        .ok_or_else(|| CliError::Config("--n is required".into()))?;
    if !(n > 0.0) {
        return Err(CliError::Config(format!("n must be positive, got {n}")));
    }
    let entry = catalog::lookup(&model).map_err(CliError::from)?;
    let target = entry.target();
    let la = laplace_approximation(&target, n, &entry.x0())?;
    let format = resolve_format(&args.format, settings, Format::Json)?;
    let payload = serde_json::json!({
        "model": model,
        "n": n,
        "map_point": la.map_point().as_slice(),
        "precision_core": matrix_rows(la.precision_core()),
        "covariance": matrix_rows(la.covariance()),
        "optimizer": {
            "iterations": la.trace().iterations,
            "final_grad_norm": la.trace().final_grad_norm,
        },
    });
    let bytes = match format {
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(&payload)
                .map_err(|e| CliError::Config(e.to_string()))?;
            b.push(b'\n');
            b
        }
        Format::Csv => {
            return Err(CliError::Config("map output is JSON only".into()));
        }
    };
    write_bytes(&bytes, resolve_out(&args.out, settings).as_ref())
}

fn matrix_rows(m: &hessian_mh::SpdMatrix) -> Vec<Vec<f64>> {
    let d = m.dim();
    (0..d)
        .map(|i| (0..d).map(|j| m.matrix()[(i, j)]).collect())
        .collect()
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use minfo::harness::{self, execute, parse_config, write_output, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK};
use minfo::MinfoError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Estimate,
    Sweep,
    Equitability,
    Ksg,
    Gradcheck,
    Complexity,
}

/// Mutual information estimation experiments.
#[derive(Debug, Parser)]
#[command(name = "minfo", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Gaussian component count per variable.
    #[arg(long)]
    k: Option<usize>,
    /// Sample count for KSG runs.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = ["dv", "f"])]
    objective: Option<String>,
    #[arg(long, value_parser = ["shuffle", "resample"])]
    marginal: Option<String>,
    #[arg(long)]
    ema_rate: Option<f64>,
    #[arg(long)]
    no_ema: bool,
    #[arg(long)]
    clip_cap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output path, `-` for standard output.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,

    /// Comma-separated correlations for `sweep`.
    #[arg(long, allow_hyphen_values = true)]
    rho_grid: Option<String>,
    /// Comma-separated noise levels for `equitability`.
    #[arg(long)]
    sigma_grid: Option<String>,
    /// Nonlinearity for `estimate`/`ksg` on uniform data: x, x3 or sin.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    k_nn: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated hidden widths, e.g. `100,100`.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Number of random networks for `gradcheck`.
    #[arg(long)]
    trials: Option<usize>,
    /// Record wall-clock milliseconds per row (makes output non-reproducible).
    #[arg(long)]
    timing: bool,

    /// `complexity`: parameter dimension.
    #[arg(long)]
    d: Option<f64>,
    /// `complexity`: bound on |T|.
    #[arg(long)]
    m_bound: Option<f64>,
    /// `complexity`: Lipschitz constant in the parameters.
    #[arg(long)]
    lipschitz: Option<f64>,
    /// `complexity`: parameter-norm bound.
    #[arg(long)]
    k_bound: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>, MinfoError> {
    s.split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| MinfoError::Config {
            key: key.to_owned(),
            reason: format!("cannot parse list {s:?}"),
        })
}

fn overrides(cli: &Cli) -> Result<Vec<(String, Value)>, MinfoError> {
    let command = format!("{:?}", cli.command).to_lowercase();
    let mut o: Vec<(String, Value)> = vec![("experiment".into(), json!(command))];
    let mut push = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            o.push((k.to_owned(), v));
        }
    };
    push("rho", cli.rho.map(|v| json!(v)));
    push("k", cli.k.map(|v| json!(v)));
    push("samples", cli.samples.map(|v| json!(v)));
    push("steps", cli.steps.map(|v| json!(v)));
    push("objective", cli.objective.as_ref().map(|v| json!(v)));
    push("marginal", cli.marginal.as_ref().map(|v| json!(v)));
    push("ema_rate", cli.ema_rate.map(|v| json!(v)));
    push("no_ema", cli.no_ema.then(|| json!(true)));
    push("clip_cap", cli.clip_cap.map(|v| json!(v)));
    push("seed", cli.seed.map(|v| json!(v)));
    push("jobs", cli.jobs.map(|v| json!(v)));
    push("out", cli.out.as_ref().map(|v| json!(v)));
    push("format", cli.format.as_ref().map(|v| json!(v)));
    push("f", cli.f.as_ref().map(|v| json!(v)));
    push("sigma", cli.sigma.map(|v| json!(v)));
    push("dim", cli.dim.map(|v| json!(v)));
    push("k_nn", cli.k_nn.map(|v| json!(v)));
    push("batch_size", cli.batch_size.map(|v| json!(v)));
    push("lr", cli.lr.map(|v| json!(v)));
    push("eval_every", cli.eval_every.map(|v| json!(v)));
    push("trials", cli.trials.map(|v| json!(v)));
    push("timing", cli.timing.then(|| json!(true)));
    push("d", cli.d.map(|v| json!(v)));
    push("m_bound", cli.m_bound.map(|v| json!(v)));
    push("lipschitz", cli.lipschitz.map(|v| json!(v)));
    push("k_bound", cli.k_bound.map(|v| json!(v)));
    push("eps", cli.eps.map(|v| json!(v)));
    push("delta", cli.delta.map(|v| json!(v)));
    if let Some(s) = &cli.rho_grid {
        o.push(("rho_grid".into(), json!(parse_list::<f64>("rho_grid", s)?)));
    }
    if let Some(s) = &cli.sigma_grid {
        o.push(("sigma_grid".into(), json!(parse_list::<f64>("sigma_grid", s)?)));
    }
    if let Some(s) = &cli.hidden {
        o.push(("hidden".into(), json!(parse_list::<usize>("hidden", s)?)));
    }
    Ok(o)
}

fn run(cli: &Cli) -> Result<i32, MinfoError> {
    let file = match &cli.config {
        Some(path) => Some(std::fs::read(path).map_err(|e| MinfoError::Config {
            key: "config".into(),
            reason: format!("cannot read {}: {e}", path.display()),
        })?),
        None => None,
    };
    let cfg = parse_config(file.as_deref(), &overrides(cli)?)?;
    let outcome = execute(&cfg)?;
    write_output(&outcome.bytes, &cfg.out)?;
    Ok(if outcome.any_failed { EXIT_NUMERIC } else { EXIT_OK })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("minfo: {e}");
            harness::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

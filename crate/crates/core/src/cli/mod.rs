//! Command-line entry points.

mod config;
mod table_io;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::{json, Value};

pub use config::{IoConfig, PrivacyConfig, RunConfig, TrainingConfig};
pub use table_io::{read_table, read_table_file, write_table, write_table_file};

use crate::codec::{encode_table, CodecState};
use crate::error::{Error, Result};
use crate::eval::{evaluate, mia_raw};
use crate::gan::{fit_with_progress, load_checkpoint, sample, save_checkpoint, Checkpoint};
use crate::privacy::{calibrate_sigma, PrivacyLedger, SanitizerConfig, DEFAULT_DELTA};
use crate::rng::{from_os_entropy, seeded};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTEGRITY: i32 = 4;

/// Added to the seed for the sampling stream so it never replays the
/// training stream.
const SAMPLE_STREAM: u64 = 0x5eed_5a4d;

#[derive(Debug, Parser)]
#[command(name = "hookgan", version, about = "Differentially private tabular data synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Replace the configured seed.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Draw the seed from the operating system (printed in the report).
    #[arg(long, conflicts_with = "seed_override")]
    pub os_entropy: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on `io.input` and write `io.checkpoint`.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Draw synthetic rows from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Compare `io.synthetic` against `io.input`.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Adds the checkpoint's ε to the report.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Report destination; overrides `io.report`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Membership inference against a checkpoint's synthetic data.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Rows to sample when `io.synthetic` is not configured.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Privacy accounting without training.
    Accountant(AccountantArgs),
    /// Fit the codec on `io.input` and dump the encoded table.
    Encode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArgs,
    },
}

#[derive(Debug, Args)]
pub struct AccountantArgs {
    /// Number of generator updates T.
    #[arg(long)]
    pub steps: u64,
    #[arg(long)]
    pub batch: usize,
    /// Noise multiplier; prints ε.
    #[arg(long, required_unless_present = "target_epsilon", conflicts_with = "target_epsilon")]
    pub sigma: Option<f64>,
    /// Target ε; prints the calibrated σ.
    #[arg(long)]
    pub target_epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// RDP orders, `lo..hi` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "2..128")]
    pub lambda_grid: String,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Schema(_) | Error::Privacy(_) | Error::Json(_) => EXIT_CONFIG,
        Error::Integrity(_) => EXIT_INTEGRITY,
        _ => EXIT_DATA,
    }
}

/// Parses arguments, runs the command and returns the exit code. Reports go
/// to `out`, diagnostics to `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match run(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit { config, seed } => run_fit(&config, &seed, out, err),
        Command::Sample {
            checkpoint,
            n,
            out: path,
            seed,
        } => run_sample(&checkpoint, n, &path, &seed, out),
        Command::Evaluate {
            config,
            checkpoint,
            out: path,
            seed,
        } => run_eval(&config, checkpoint.as_deref(), path.as_deref(), &seed, out),
        Command::Attack {
            config,
            checkpoint,
            n,
            seed,
        } => run_attack(&config, &checkpoint, n, &seed, out),
        Command::Accountant(args) => run_accountant(&args, out),
        Command::Encode { config, out: path, seed } => run_encode(&config, &path, &seed, out),
    }
}

fn resolve_seed(configured: u64, args: &SeedArgs) -> u64 {
    if args.os_entropy {
        from_os_entropy().gen()
    } else {
        args.seed_override.unwrap_or(configured)
    }
}

fn privacy_json(ckpt: &Checkpoint) -> Result<Value> {
    let l = &ckpt.ledger;
    let mut v = json!({
        "sigma": l.config.sigma,
        "clip": l.config.clip,
        "batch": l.config.batch,
        "delta": l.delta,
        "updates": l.steps,
    });
    match ckpt.epsilon()? {
        Some((eps, order)) => {
            v["epsilon"] = json!(eps);
            v["order"] = json!(order);
        }
        None => v["epsilon"] = json!("NON-PRIVATE"),
    }
    Ok(v)
}

pub fn run_fit(config: &Path, seed: &SeedArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let cfg = RunConfig::load(config)?;
    let seed = resolve_seed(cfg.seed, seed);
    let hyper = cfg.to_hyper(seed)?;
    let input = cfg.require(&cfg.io.input, "input")?;
    let ckpt_path = cfg.require(&cfg.io.checkpoint, "checkpoint")?;
    let raw = read_table_file(input, &cfg.schema)?;
    let every = (hyper.steps / 10).max(1);
    let ckpt = fit_with_progress(&raw, &cfg.schema, &hyper, |s| {
        if s.step % every == 0 {
            let _ = writeln!(err, "step {}: disc {:.4} gen {:.4}", s.step, s.disc, s.gen);
        }
    })?;
    save_checkpoint(&ckpt, ckpt_path)?;
    let report = json!({
        "command": "fit",
        "checkpoint": ckpt_path.display().to_string(),
        "seed": seed,
        "steps": ckpt.step,
        "rows": raw.len() - ckpt.dropped_rows,
        "dropped_rows": ckpt.dropped_rows,
        "privacy": privacy_json(&ckpt)?,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    emit(out, &report)
}

pub fn run_sample(
    checkpoint: &Path,
    n: usize,
    path: &Path,
    seed: &SeedArgs,
    out: &mut dyn Write,
) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let seed = resolve_seed(ckpt.hyper.seed, seed);
    let rows = sample(&ckpt, n, &mut seeded(seed.wrapping_add(SAMPLE_STREAM)))?;
    write_table_file(path, &ckpt.codec.schema.names(), &rows)?;
    emit(
        out,
        &json!({
            "command": "sample",
            "out": path.display().to_string(),
            "rows": rows.len(),
            "seed": seed,
            "privacy": privacy_json(&ckpt)?,
        }),
    )
}

pub fn run_eval(
    config: &Path,
    checkpoint: Option<&Path>,
    report_path: Option<&Path>,
    seed: &SeedArgs,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = resolve_seed(cfg.seed, seed);
    let real = read_table_file(cfg.require(&cfg.io.input, "input")?, &cfg.schema)?;
    let synth = read_table_file(cfg.require(&cfg.io.synthetic, "synthetic")?, &cfg.schema)?;
    let mut report = evaluate(&real, &synth, &cfg.schema, seed)?;
    let mut privacy = Value::Null;
    if let Some(p) = checkpoint {
        let ckpt = load_checkpoint(p)?;
        report.metadata.delta = Some(ckpt.ledger.delta);
        report.metadata.epsilon = ckpt.epsilon()?.map(|(e, _)| e);
        privacy = privacy_json(&ckpt)?;
    }
    let mut value = serde_json::to_value(&report)?;
    value["command"] = json!("evaluate");
    value["privacy"] = privacy;
    value["version"] = json!(env!("CARGO_PKG_VERSION"));
    match report_path.or(cfg.io.report.as_deref()) {
        Some(p) => {
            let mut f = std::fs::File::create(p)?;
            emit(&mut f, &value)?;
            emit(out, &json!({"command": "evaluate", "report": p.display().to_string()}))
        }
        None => emit(out, &value),
    }
}

pub fn run_attack(
    config: &Path,
    checkpoint: &Path,
    n: Option<usize>,
    seed: &SeedArgs,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = resolve_seed(cfg.seed, seed);
    let ckpt = load_checkpoint(checkpoint)?;
    let schema = &ckpt.codec.schema;
    let members = read_table_file(cfg.require(&cfg.io.members, "members")?, schema)?;
    let nonmembers = read_table_file(cfg.require(&cfg.io.nonmembers, "nonmembers")?, schema)?;
    let synth = match (&cfg.io.synthetic, n) {
        (Some(p), None) => read_table_file(p, schema)?,
        (_, Some(n)) => sample(&ckpt, n, &mut seeded(seed.wrapping_add(SAMPLE_STREAM)))?,
        (None, None) => {
            return Err(Error::Config(
                "attack needs `io.synthetic` or `--n` rows to sample".into(),
            ))
        }
    };
    let outcome = mia_raw(&ckpt.codec, &members, &nonmembers, &synth)?;
    emit(
        out,
        &json!({
            "command": "attack",
            "mia_accuracy": outcome.accuracy,
            "threshold": outcome.threshold,
            "members": members.len(),
            "nonmembers": nonmembers.len(),
            "synthetic_rows": synth.len(),
            "privacy": privacy_json(&ckpt)?,
        }),
    )
}

pub fn parse_lambda_grid(text: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("cannot parse order grid `{text}`"));
    let grid: Vec<u32> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

pub fn run_accountant(args: &AccountantArgs, out: &mut dyn Write) -> Result<()> {
    let grid = parse_lambda_grid(&args.lambda_grid)?;
    let report = match (args.sigma, args.target_epsilon) {
        (Some(sigma), None) if sigma == 0.0 => json!({
            "command": "accountant",
            "sigma": 0.0,
            "epsilon": "NON-PRIVATE",
        }),
        (Some(sigma), None) => {
            let cfg = SanitizerConfig::new(1.0, args.batch, sigma)?;
            let ledger = PrivacyLedger::new(cfg, grid, args.delta)?.with_steps(args.steps);
            let (eps, order) = ledger.epsilon()?;
            json!({
                "command": "accountant",
                "steps": args.steps,
                "batch": args.batch,
                "sigma": sigma,
                "delta": args.delta,
                "epsilon": eps,
                "order": order,
            })
        }
        (None, Some(target)) => {
            let sigma = calibrate_sigma(target, args.delta, args.steps, args.batch, &grid)?;
            let cfg = SanitizerConfig::new(1.0, args.batch, sigma)?;
            let ledger = PrivacyLedger::new(cfg, grid, args.delta)?.with_steps(args.steps);
            let (eps, order) = ledger.epsilon()?;
            json!({
                "command": "accountant",
                "steps": args.steps,
                "batch": args.batch,
                "target_epsilon": target,
                "sigma": sigma,
                "delta": args.delta,
                "epsilon": eps,
                "order": order,
            })
        }
        _ => {
            return Err(Error::Config(
                "give exactly one of --sigma and --target-epsilon".into(),
            ))
        }
    };
    emit(out, &report)
}

/// Column names of the encoded layout, e.g. `x.alpha`, `x.mode0`, `k.a`.
pub fn encoded_header(codec: &CodecState) -> Vec<String> {
    let mut names = Vec::with_capacity(codec.layout.row_width);
    for (spec, col) in codec.schema.columns.iter().zip(&codec.columns) {
        match col {
            crate::codec::ColumnCodec::Numeric { model, .. } => {
                names.push(format!("{}.alpha", spec.name));
                names.extend((0..model.mode_count()).map(|m| format!("{}.mode{m}", spec.name)));
            }
            crate::codec::ColumnCodec::Categorical { categories } => {
                names.extend(categories.iter().map(|c| format!("{}.{c}", spec.name)));
            }
        }
    }
    names
}

pub fn run_encode(config: &Path, path: &Path, seed: &SeedArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = resolve_seed(cfg.seed, seed);
    let raw = read_table_file(cfg.require(&cfg.io.input, "input")?, &cfg.schema)?;
    let (table, codec) = encode_table(&raw, &cfg.schema, cfg.hyper.max_modes, seed)?;
    let header = encoded_header(&codec);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = table
        .data
        .iter_rows()
        .map(|r| r.iter().map(|v| format!("{v:.16e}")).collect())
        .collect();
    write_table_file(path, &header_refs, &rows)?;
    emit(
        out,
        &json!({
            "command": "encode",
            "out": path.display().to_string(),
            "rows": rows.len(),
            "width": codec.layout.row_width,
            "dropped_rows": table.dropped,
        }),
    )
}

/// Rounds to 6 significant digits for reports.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = json!(round_sig(x));
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Writes a JSON report with floats at 6 significant digits.
pub fn emit(out: &mut dyn Write, report: &Value) -> Result<()> {
    let mut v = report.clone();
    round_floats(&mut v);
    serde_json::to_writer_pretty(&mut *out, &v)?;
    writeln!(out)?;
    Ok(())
}

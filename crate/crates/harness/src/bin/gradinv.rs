use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use gradinv_core::{Activation, ActivationKind};
use gradinv_harness::config::{ExperimentConfig, OutputFormat};
use gradinv_harness::sweep::{run_point_detailed, DataSource, SweepOptions};
use gradinv_harness::{run_sweep, HarnessError, Point};
use gradinv_oracle::{run_selftest, SelftestLevel};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gradinv", version, about = "Batch reconstruction from a single gradient query")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack the first grid point of a config once and print the result.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the JSON result to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<OutputFormat>,
    },
    /// Run every grid point and seed of a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Runs this seed only.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<OutputFormat>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Keep records already in the output file and run the rest.
        #[arg(long)]
        resume: bool,
    },
    /// Run the oracle suites.
    Selftest {
        /// Full Monte-Carlo budgets (minutes rather than seconds).
        #[arg(long)]
        full: bool,
    },
    /// Print the Gaussian derivative moments of an activation.
    Moments {
        #[arg(long)]
        activation: String,
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
    },
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    OutputFormat::from_str(s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct AttackOutput<'a> {
    record: &'a gradinv_harness::ExperimentRecord,
    y_hat: Option<Vec<f64>>,
    lambda_hat: Option<Vec<f64>>,
    signs: Option<Vec<f64>>,
}

fn first_point(cfg: &ExperimentConfig, data: &DataSource) -> Point {
    let p = &cfg.points[0];
    Point {
        d: data.dim().unwrap_or(p.d),
        ..p.clone()
    }
}

fn attack(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, format: Option<OutputFormat>) -> Result<i32, HarnessError> {
    let cfg = ExperimentConfig::from_file(&config)?;
    if format == Some(OutputFormat::Csv) {
        return Err(HarnessError::Config("attack prints JSON; use sweep for CSV".into()));
    }
    let data = DataSource::open(&cfg.data)?;
    let point = first_point(&cfg, &data);
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let (mut record, result) = run_point_detailed(&point, &data, seed);
    // keep the output byte-for-byte reproducible
    record.wall_ms = None;
    let output = AttackOutput {
        record: &record,
        y_hat: result.as_ref().map(|r| r.y_hat.to_vec()),
        lambda_hat: result.as_ref().map(|r| r.lambda_hat.to_vec()),
        signs: result.as_ref().map(|r| r.signs.to_vec()),
    };
    let text = serde_json::to_string_pretty(&output)?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(match record.status.as_str() {
        "ok" => 0,
        _ if record.stage.as_deref() == Some("data") || record.stage.as_deref() == Some("model") => 1,
        _ => 2,
    })
}

fn sweep(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
    jobs: usize,
    resume: bool,
) -> Result<i32, HarnessError> {
    let mut cfg = ExperimentConfig::from_file(&config)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let mut opts = SweepOptions::from_config(&cfg);
    opts.jobs = jobs;
    opts.resume = resume;
    if out.is_some() {
        opts.out = out;
    }
    if let Some(f) = format {
        opts.format = f;
    }
    if resume && opts.out.is_none() {
        return Err(HarnessError::Config("--resume needs an output file".into()));
    }
    let mut failed = 0;
    run_sweep(&cfg, &opts, |r| {
        if r.status == "failed" {
            failed += 1;
            eprintln!(
                "seed {} d={} m={}: {}",
                r.seed,
                r.d,
                r.m,
                r.error.as_deref().unwrap_or("failed")
            );
        }
    })?;
    if failed > 0 {
        eprintln!("{failed} run(s) failed; see the status column");
    }
    Ok(0)
}

fn selftest(full: bool) -> i32 {
    let level = if full { SelftestLevel::Full } else { SelftestLevel::Quick };
    let cases = run_selftest(level);
    let mut failures = 0;
    for c in &cases {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        println!("{tag} {:<12} {:<40} {}", c.suite, c.name, c.detail);
        failures += usize::from(!c.passed);
    }
    println!("{} checks, {failures} failed", cases.len());
    if failures == 0 {
        0
    } else {
        2
    }
}

fn moments(name: &str, variance: f64) -> Result<i32, HarnessError> {
    let kind = ActivationKind::from_str(name).map_err(|e| HarnessError::Config(e.to_string()))?;
    let act = Activation::new(kind).map_err(|e| HarnessError::Config(e.to_string()))?;
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(HarnessError::Config(format!("variance {variance} must be positive")));
    }
    println!("activation {} (variance {variance})", act.name());
    println!("order  E[sigma^(k)(Z)]");
    for k in 0..=4 {
        println!("{k:>5}  {:>12.6}", act.moment(k, variance)?);
    }
    let show = |o: Option<u32>| o.map_or("-".to_string(), |k| k.to_string());
    println!("k2 = {}, k3 = {}", show(act.k2()), show(act.k3()));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Attack {
            config,
            seed,
            out,
            format,
        } => attack(config, seed, out, format),
        Command::Sweep {
            config,
            seed,
            out,
            format,
            jobs,
            resume,
        } => sweep(config, seed, out, format, jobs, resume),
        Command::Selftest { full } => Ok(selftest(full)),
        Command::Moments { activation, variance } => moments(&activation, variance),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

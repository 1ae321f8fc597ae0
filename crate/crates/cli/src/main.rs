#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pullback_lab::corpus::demo_corpus;
use serde::Serialize;

use config::RunConfig;
use pipeline::{output_dir, write_json, Failure, RunReport};

#[derive(Parser)]
#[command(name = "pullback-lab")]
#[command(about = "Pullback iteration of marked Thurston maps with realized/obstructed classification")]
#[command(version)]
struct Cli {
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; PULLBACK_LAB_OUT takes precedence when set
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the iteration budget of the configuration
    #[arg(long, global = true)]
    max_iters: Option<usize>,

    /// Override a tolerance, e.g. --tol eps_lift=1e-10 (repeatable)
    #[arg(long = "tol", value_name = "NAME=VALUE", global = true)]
    tol: Vec<String>,

    /// Run every configuration matching a glob pattern
    #[arg(long, global = true)]
    batch: Option<String>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Postsingular set, orbit portrait, critical and fixed points of the configured map
    Analyze,
    /// Run, classify and certify; writes the trace, report and certificate
    Run,
    /// Replay a trace and print its classification
    Classify { trace: PathBuf },
    /// Replay a trace and search it for a Levy-multicurve certificate
    Certify { trace: PathBuf },
    /// Verify a trace (and optionally a certificate); exit 0 iff every check passes
    Check {
        trace: PathBuf,
        certificate: Option<PathBuf>,
    },
    /// Write the demo corpus configurations and run them all
    Demo,
}

fn load_config(path: &Path, cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(path).map_err(Failure::Input)?;
    config
        .apply_overrides(cli.max_iters, &cli.tol)
        .map_err(Failure::Input)?;
    Ok(config)
}

fn config_paths(cli: &Cli) -> Result<Vec<PathBuf>, Failure> {
    if let Some(pattern) = &cli.batch {
        let paths: Vec<PathBuf> = glob::glob(pattern)
            .context("invalid --batch pattern")
            .map_err(Failure::Input)?
            .collect::<Result<_, _>>()
            .context("reading --batch matches")
            .map_err(Failure::Input)?;
        if paths.is_empty() {
            return Err(Failure::Input(anyhow::anyhow!("--batch {pattern:?} matches no files")));
        }
        Ok(paths)
    } else if let Some(path) = &cli.config {
        Ok(vec![path.clone()])
    } else {
        Err(Failure::Input(anyhow::anyhow!("--config or --batch is required")))
    }
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.into()))?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct Analysis {
    name: String,
    map: pullback_lab::RationalMap,
    postsingular: pullback_lab::ratmap::PostsingularAnalysis,
    fixed_points: Vec<pullback_lab::ratmap::FixedPointData>,
}

fn analyze(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let tol = &config.tolerances;
    let map = config.spec.map.iterate(config.iterate);
    let postsingular = map
        .postsingular_analysis(&config.spec.declared, tol)
        .map_err(|e| Failure::Input(e.into()))?;
    let fixed_points = map
        .fixed_points(Some(&postsingular.postsingular), tol)
        .map_err(|e| Failure::Numerical(e.into()))?;
    let analysis = Analysis {
        name: config.name.clone(),
        map,
        postsingular,
        fixed_points,
    };
    std::fs::create_dir_all(out).map_err(|e| Failure::Input(e.into()))?;
    write_json(&out.join(format!("{}.analysis.json", config.name)), &analysis).map_err(Failure::Input)?;
    print_json(&analysis)
}

/// Runs configurations concurrently; the worst exit status wins.
fn run_all(configs: Vec<RunConfig>, out: &Path) -> u8 {
    let results: Vec<Result<RunReport, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(move || pipeline::execute(c, out)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let mut code = 0;
    for (config, result) in configs.iter().zip(results) {
        match result {
            Ok(report) => println!("{}", report.summary()),
            Err(e) => {
                eprintln!("{}: {e}", config.name);
                code = code.max(e.exit_code());
            }
        }
    }
    code
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    let out = output_dir(cli.out.clone());
    match &cli.command {
        Commands::Analyze => {
            for path in config_paths(cli)? {
                analyze(&load_config(&path, cli)?, &out)?;
            }
            Ok(0)
        }
        Commands::Run => {
            let mut configs = Vec::new();
            let mut code = 0;
            for path in config_paths(cli)? {
                match load_config(&path, cli) {
                    Ok(c) => configs.push(c),
                    Err(e) if cli.batch.is_some() => {
                        eprintln!("{}: {e}", path.display());
                        code = e.exit_code();
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(code.max(run_all(configs, &out)))
        }
        Commands::Classify { trace } => {
            print_json(&pipeline::classify_trace(trace)?)?;
            Ok(0)
        }
        Commands::Certify { trace } => match pipeline::certify_trace(trace)? {
            Some(cert) => {
                std::fs::create_dir_all(&out).map_err(|e| Failure::Input(e.into()))?;
                let stem = trace
                    .file_name()
                    .and_then(|s| s.to_str())
                    .map(|s| s.trim_end_matches(".jsonl").trim_end_matches(".trace"))
                    .unwrap_or("run");
                let path = out.join(format!("{stem}.certificate.json"));
                write_json(&path, &cert).map_err(Failure::Input)?;
                println!(
                    "certificate at step {}: modulus {:.6} > threshold {:.6}, length bound {:.6}; wrote {}",
                    cert.step,
                    cert.modulus,
                    cert.threshold,
                    cert.length_bound,
                    path.display()
                );
                Ok(0)
            }
            None => {
                println!("no certificate emitted within the trace");
                Ok(1)
            }
        },
        Commands::Check { trace, certificate } => {
            let notes = pipeline::check(trace, certificate.as_deref())?;
            for n in notes {
                println!("ok: {n}");
            }
            Ok(0)
        }
        Commands::Demo => {
            let dir = out.join("configs");
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Input(e.into()))?;
            let mut configs = Vec::new();
            for demo in demo_corpus() {
                let mut config = RunConfig::from(demo);
                config
                    .apply_overrides(cli.max_iters, &cli.tol)
                    .map_err(Failure::Input)?;
                write_json(&dir.join(format!("{}.json", config.name)), &config).map_err(Failure::Input)?;
                configs.push(config);
            }
            Ok(run_all(configs, &out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

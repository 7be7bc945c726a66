//! Command-line front end: experiment discovery, config loading, seeded
//! execution, and artifact emission.
//!
//! Exit codes: 0 all assertions pass, 2 at least one assertion failed,
//! 1 configuration or runtime error. All randomness flows from the single
//! `--seed` value; the manifest is the only emitted file containing
//! wall-clock data, so reruns with the same config and seed produce
//! byte-identical CSVs and report JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use infoloop::experiments::{self, ExperimentReport};

#[derive(Parser)]
#[command(name = "infoloop", version, about = "Information-flow simulator for synthetic-data training loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List experiment ids with one-line descriptions
    List,
    /// Print an experiment's config schema (with defaults) and assertion contract
    Describe { id: String },
    /// Run one experiment and emit CSVs, a report, and a manifest
    Run {
        id: String,
        /// TOML config path; omitted means the documented defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; every sub-stream derives from it
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
        /// Replace existing output files instead of refusing
        #[arg(long)]
        overwrite: bool,
        /// Worker thread count for seed fan-out (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Provenance record for one run. Timestamps are unix seconds; this is the
/// only emitted file whose bytes vary across reruns.
#[derive(Serialize)]
struct RunManifest {
    tool_version: String,
    experiment_id: String,
    config_digest: String,
    master_seed: u64,
    started_unix_s: f64,
    finished_unix_s: f64,
    files: Vec<FileEntry>,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (id, desc) in experiments::EXPERIMENTS {
                println!("{id}  {desc}");
            }
            ExitCode::SUCCESS
        }
        Command::Describe { id } => match experiments::describe(&id) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Run {
            id,
            config,
            seed,
            out,
            overwrite,
            jobs,
        } => match cmd_run(&id, config.as_deref(), seed, &out, overwrite, jobs) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}

fn cmd_run(
    id: &str,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
    overwrite: bool,
    jobs: Option<usize>,
) -> Result<bool, String> {
    if let Some(n) = jobs {
        configure_jobs(n)?;
    }
    let config_text = match config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?,
        None => String::new(),
    };

    let started = unix_now();
    let mut report = experiments::run_experiment(id, &config_text, seed).map_err(|e| e.to_string())?;

    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let mut planned: Vec<String> = report
        .tables
        .iter()
        .map(|t| format!("{}.csv", t.name))
        .collect();
    planned.push("report.json".to_string());
    planned.push("manifest.json".to_string());
    if !overwrite {
        for name in &planned {
            if out.join(name).exists() {
                return Err(format!(
                    "output file {} already exists; pass --overwrite to replace it",
                    out.join(name).display()
                ));
            }
        }
    }

    let mut files = Vec::new();
    for table in &report.tables {
        let name = format!("{}.csv", table.name);
        let bytes = table.to_csv().into_bytes();
        write_atomic(&out.join(&name), &bytes)?;
        files.push(FileEntry {
            name: name.clone(),
            sha256: sha256_hex(&bytes),
        });
        report.artifacts.push(name);
    }
    report.artifacts.push("report.json".to_string());

    let report_bytes = to_json_bytes(&report)?;
    write_atomic(&out.join("report.json"), &report_bytes)?;
    files.push(FileEntry {
        name: "report.json".to_string(),
        sha256: sha256_hex(&report_bytes),
    });

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment_id: report.id.clone(),
        config_digest: report.config_digest.clone(),
        master_seed: seed,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        files,
    };
    write_atomic(&out.join("manifest.json"), &to_json_bytes(&manifest)?)?;

    print_outcome(&report);
    Ok(report.passed())
}

fn print_outcome(report: &ExperimentReport) {
    for a in &report.assertions {
        let status = if a.pass { "pass" } else { "FAIL" };
        println!("[{status}] {}: observed {:.6e} (want {})", a.name, a.observed, a.relation);
    }
    let failed = report.assertions.iter().filter(|a| !a.pass).count();
    println!(
        "{}: {}/{} assertions passed",
        report.id,
        report.assertions.len() - failed,
        report.assertions.len()
    );
}

#[cfg(feature = "parallel")]
fn configure_jobs(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot configure {n} worker threads: {e}"))
}

#[cfg(not(feature = "parallel"))]
fn configure_jobs(_n: usize) -> Result<(), String> {
    Ok(())
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Single-owner write with atomic rename so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
    fs::rename(&tmp, path).map_err(|e| format!("cannot finalize {}: {e}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

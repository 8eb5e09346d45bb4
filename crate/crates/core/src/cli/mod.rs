//! Experiment runner: `felab run | suite | list | convergence`.

pub mod config;
pub mod convergence;
pub mod report;
pub mod runner;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};
use config::LoadedConfig;
use report::{Outcome, Report};

#[derive(Debug, Parser)]
#[command(
    name = "felab",
    version,
    about = "Run discrete-identity experiments on one-step integrators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment configuration.
    Run {
        config: PathBuf,
        /// Output directory; overrides FELAB_REPORT_DIR and the config.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Run every `*.toml` configuration in a directory.
    Suite {
        dir: PathBuf,
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// List builtin tableaux, problems, observables and experiment kinds.
    List,
    /// Run a convergence configuration and print the measured orders.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
}

/// Parses `std::env::args` and returns the process exit code.
pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => execute(cli.command),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                Outcome::ConfigError.exit_code()
            } else {
                0
            }
        }
    }
}

pub fn execute(cmd: Command) -> i32 {
    match cmd {
        Command::List => {
            print!("{}", list_text());
            0
        }
        Command::Run { config, report_dir } => run_one(&config, report_dir.as_deref(), false),
        Command::Convergence { config, report_dir } => run_one(&config, report_dir.as_deref(), true),
        Command::Suite { dir, report_dir } => match run_suite(&dir, report_dir.as_deref()) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                Outcome::ConfigError.exit_code()
            }
        },
    }
}

/// Flag, then `FELAB_REPORT_DIR`, then the config's `report.dir`, then `reports`.
pub fn report_dir(flag: Option<&Path>, loaded: Option<&LoadedConfig>) -> PathBuf {
    if let Some(d) = flag {
        return d.to_path_buf();
    }
    if let Some(d) = std::env::var_os("FELAB_REPORT_DIR").filter(|d| !d.is_empty()) {
        return PathBuf::from(d);
    }
    if let Some(l) = loaded {
        if let Some(d) = &l.config.report.dir {
            return l.base_dir.join(d);
        }
    }
    PathBuf::from("reports")
}

fn load_and_run(path: &Path) -> (Option<LoadedConfig>, Report) {
    match config::load(path) {
        Ok(l) => {
            let r = runner::run_loaded(&l);
            (Some(l), r)
        }
        Err(e) => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (None, runner::config_error_report(&id, &e))
        }
    }
}

fn run_one(path: &Path, flag: Option<&Path>, orders: bool) -> i32 {
    let (loaded, report) = load_and_run(path);
    print!("{}", report.describe());
    if orders {
        if report.summary.measured_orders.is_empty() {
            println!("no measured orders");
        }
        for (name, p) in &report.summary.measured_orders {
            println!("{name}: {p:.4}");
        }
    }
    if loaded.is_some() {
        let dir = report_dir(flag, loaded.as_ref());
        if let Err(e) = report.write(&dir) {
            eprintln!("error: {e}");
            return Outcome::ConfigError.exit_code();
        }
    }
    report.summary.exit_code
}

fn worker_threads() -> Option<usize> {
    std::env::var("FELAB_THREADS").ok()?.parse().ok().filter(|&n| n > 0)
}

/// Sorted `*.toml` files directly inside `dir`.
pub fn suite_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs a suite; reports are identical whatever the thread count.
pub fn run_suite(dir: &Path, flag: Option<&Path>) -> Result<i32> {
    let files = suite_files(dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_threads() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<(Option<LoadedConfig>, Report)> =
        pool.install(|| files.par_iter().map(|p| load_and_run(p)).collect());
    let out = report_dir(flag, None);
    let mut code = 0;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (_, r) in &results {
        print!("{}", r.describe());
        r.write(&out)?;
        code = code.max(r.summary.exit_code);
        rows.extend(r.rows.iter().cloned());
        summaries.push(&r.summary);
    }
    rows.sort_by(|a, b| a.experiment.cmp(&b.experiment).then(a.step.cmp(&b.step)));
    summaries.sort_by(|a, b| a.id.cmp(&b.id));
    report::write_file(&out.join("suite.csv"), &report::rows_csv(&rows))?;
    let json = serde_json::to_string_pretty(&summaries).expect("summaries serialise") + "\n";
    report::write_file(&out.join("suite.json"), &json)?;
    let failed = results.iter().filter(|(_, r)| r.summary.exit_code != 0).count();
    println!("{} experiments, {} not passing", results.len(), failed);
    Ok(code)
}

pub fn list_text() -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "tableaux:");
    for name in crate::tableaux::BUILTIN_TABLEAUX {
        let t = crate::tableaux::builtin_tableau::<f64>(name).expect("builtin");
        let _ = writeln!(s, "  {name} (stages {}, order {})", t.stages(), t.order());
    }
    let _ = writeln!(s, "ode problems:");
    for (name, params) in runner::ODE_PROBLEMS {
        let _ = writeln!(s, "  {name}{}", fmt_params(params));
    }
    let _ = writeln!(s, "pde systems:");
    for ((name, params), tag) in runner::PDE_PROBLEMS.iter().zip(["(§3.2)", "(§3.2)", "(§3.3)"]) {
        let _ = writeln!(s, "  {name} {tag}{}", fmt_params(params));
    }
    let _ = writeln!(s, "observables:");
    for name in runner::OBSERVABLES {
        let _ = writeln!(s, "  {name}");
    }
    let _ = writeln!(s, "conservation laws:");
    let _ = writeln!(s, "  wave-fd: energy, momentum");
    let _ = writeln!(s, "  nls-fd: mass");
    let _ = writeln!(s, "  kdv-theta: mass, energy");
    let _ = writeln!(s, "identities:");
    for name in runner::IDENTITIES {
        let _ = writeln!(s, "  {name}");
    }
    let _ = writeln!(s, "experiment kinds:");
    for k in [
        "tableau-check",
        "fe-test",
        "identity",
        "conservation",
        "multisymplectic",
        "convergence",
    ] {
        let _ = writeln!(s, "  {k}");
    }
    s
}

fn fmt_params(params: &[(&str, f64)]) -> String {
    if params.is_empty() {
        return String::new();
    }
    let inner: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!(" [{}]", inner.join(", "))
}

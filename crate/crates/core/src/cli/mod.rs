//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.

pub mod bench;
pub mod check;
pub mod compare;
pub mod config;
pub mod run;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use bench::{bench, BenchRow, BenchTable};
pub use check::{run_checks, CheckOutcome};
pub use compare::{compare, write_report, CompareReport, CompareRow, Reference};
pub use config::{DataSource, EvalSettings, Method, RunConfig, TargetSpec, DATA_DIR_ENV};
pub use run::{PreparedRun, RunSummary};

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sivism", version, about = "Semi-implicit variational inference experiments")]
pub struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train or sample as described by a JSON run config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare run directories against a reference.
    Compare {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Reference run directory; defaults to exact target draws.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Exact draws used when no reference directory is given.
        #[arg(long, default_value_t = 100_000)]
        reference_samples: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Median seconds per iteration for each config.
    Bench {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        warmup: usize,
        #[arg(long, default_value_t = bench::MIN_WINDOW)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle check battery.
    Check {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig { .. } | Error::Dataset(_) | Error::InvalidSpec(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn report_err(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_for(e)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    dispatch(cli)
}

pub fn dispatch(cli: Cli) -> i32 {
    let quiet = cli.quiet;
    let say = |s: String| {
        if !quiet {
            println!("{s}");
        }
    };
    match cli.command {
        Command::Run { config, out, seed } => {
            let prepared = match PreparedRun::from_path(&config, seed) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            say(format!(
                "running {} on {} (seed {}) into {}",
                prepared.config.method.as_str(),
                prepared.config.target.name(),
                prepared.config.seed,
                out.display()
            ));
            match prepared.execute(&out) {
                Ok(s) => {
                    say(format!(
                        "done: {} iterations in {:.1}s, {} samples{}",
                        s.iterations,
                        s.wall_time,
                        s.samples,
                        s.knn_kl.map_or(String::new(), |k| format!(", knn_kl {k:.5}"))
                    ));
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_RUNTIME
                }
            }
        }
        Command::Compare {
            runs,
            reference,
            reference_samples,
            k,
            out,
            seed,
        } => {
            let r = match reference {
                Some(d) => Reference::Dir(d),
                None => Reference::Exact {
                    n: reference_samples,
                    seed,
                },
            };
            match compare(&runs, &r, k, Some(&out)).and_then(|rep| write_report(&rep, &out).map(|_| rep)) {
                Ok(rep) => {
                    say(rep.to_text());
                    EXIT_OK
                }
                Err(e) => report_err(&e),
            }
        }
        Command::Bench {
            configs,
            warmup,
            iterations,
            out,
            seed,
        } => match bench(&configs, warmup, iterations, seed) {
            Ok(t) => {
                if let Some(o) = out {
                    let res = serde_json::to_string_pretty(&t)
                        .map_err(Error::from)
                        .and_then(|j| fs::write(&o, j).map_err(Error::from));
                    if let Err(e) = res {
                        return report_err(&e);
                    }
                }
                say(t.to_text());
                EXIT_OK
            }
            Err(e) => report_err(&e),
        },
        Command::Check { out } => {
            let results = run_checks();
            for r in &results {
                say(format!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail));
            }
            if let Some(o) = out {
                let res = serde_json::to_string_pretty(&results)
                    .map_err(Error::from)
                    .and_then(|j| fs::write(&o, j).map_err(Error::from));
                if let Err(e) = res {
                    return report_err(&e);
                }
            }
            if results.iter().all(|r| r.passed) {
                EXIT_OK
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::export::export_traces;
use crate::registry::{gen_data, registry_lookup, BENCHMARK_NAMES};
use crate::report::{compare_dirs, render_text, write_json, DEFAULT_ALPHA};
use crate::runner::{artifact_path, run_experiment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Output directory used when `--out` is not given and `HYPERTUNE_OUT` is unset.
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "hypertune", version, about = "Black-box hyperparameter search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config, one artifact per seed.
    Run {
        config: PathBuf,
        /// Output directory [default: $HYPERTUNE_OUT or ./runs]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize and test run artifacts found under the given directories.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Strategy used as the improvement baseline.
        #[arg(long)]
        baseline: Option<String>,
        /// Significance level for marking pairwise tests.
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Also write the report as JSON to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write every evaluation of the found artifacts as CSV.
    Export {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Print the available benchmark names.
    ListBenchmarks,
    /// Write a benchmark's synthetic dataset in its file format.
    GenData {
        benchmark: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os("HYPERTUNE_OUT").filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_dir(out);
            let artifacts = run_experiment(&cfg, &out)?;
            for a in &artifacts {
                let best = a.trace.final_best().map_or_else(|| "none".to_string(), |b| format!("{b:.6}"));
                println!(
                    "{} {} seed {}: best {} over {} evaluations -> {}",
                    cfg.benchmark,
                    cfg.strategy,
                    a.seed,
                    best,
                    a.trace.len(),
                    artifact_path(&out, &cfg.benchmark, cfg.strategy, a.seed).display()
                );
                if let Some(reason) = &a.trace.halted {
                    eprintln!("warning: seed {} halted early: {reason}", a.seed);
                }
            }
        }
        Command::Compare {
            dirs,
            baseline,
            alpha,
            json,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(HarnessError::InvalidConfig(format!("alpha must lie in (0,1), got {alpha}")));
            }
            let reports = compare_dirs(&dirs, baseline.as_deref(), alpha)?;
            print!("{}", render_text(&reports));
            if let Some(path) = json {
                write_json(&reports, &path)?;
            }
        }
        Command::Export { dirs, csv } => {
            let rows = export_traces(&dirs, &csv)?;
            println!("wrote {rows} rows to {}", csv.display());
        }
        Command::ListBenchmarks => {
            for name in BENCHMARK_NAMES {
                let e = registry_lookup(name)?;
                println!("{name}\t{} parameters\t{}", e.space.len(), e.description);
            }
        }
        Command::GenData { benchmark, seed, out } => {
            gen_data(&benchmark, seed, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

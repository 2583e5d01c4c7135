// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod run;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "hangstring",
    about = "Experiments for the degenerate wave equation of a hanging string"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Worker threads for sweeps (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Check { config: PathBuf },
    /// Print the version.
    Version,
}

const PARSE_ERROR: u8 = 2;
const FAILURE: u8 = 1;

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(PARSE_ERROR)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(PARSE_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Version => {
            println!("hangstring {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::Check { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: config ok", cfg.kind.name());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            jobs,
            output_dir,
        } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let out = output_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(k) = jobs {
                pool = pool.num_threads(k.max(1));
            }
            let pool = match pool.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(FAILURE);
                }
            };
            let start = std::time::Instant::now();
            let result = pool.install(|| run::run_config(&cfg, &out));
            log::info!("{} finished in {:.2} s", cfg.kind.name(), start.elapsed().as_secs_f64());
            match result {
                Ok(o) => {
                    println!(
                        "{}: {} ({})",
                        cfg.kind.name(),
                        if o.passed { "PASS" } else { "FAIL" },
                        o.metric
                    );
                    if o.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(FAILURE)
                    }
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", cfg.kind.name());
                    ExitCode::from(FAILURE)
                }
            }
        }
    }
}

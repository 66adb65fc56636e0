use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::{env, fs};

use clap::{Parser, Subcommand};
use swipt_mm::experiment::{self, Config, ExperimentError, SolverFamily};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "swipt-mm",
    version,
    about = "Rate/energy trade-off experiments for multiuser MIMO SWIPT"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for `<type>.csv` and `summary.json`; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated solver families, overriding the config
        /// (mmq-sum, mmq-hybrid, mml, grad, bd).
        #[arg(long, value_delimiter = ',')]
        solvers: Option<Vec<String>>,
        /// Run this single seed instead of the configured ones.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to SWIPT_MM_THREADS, then to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match env::var("SWIPT_MM_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Failure::config(format!(
                    "SWIPT_MM_THREADS must be a positive integer, got {v:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Failure::config("thread count must be positive"));
    }
    Ok(n)
}

fn load(path: &Path, solvers: Option<Vec<String>>, seed: Option<u64>) -> Result<Config, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("reading {}: {e}", path.display())))?;
    let mut cfg = Config::from_json(&text)?;
    if let Some(tokens) = solvers {
        let families = tokens
            .iter()
            .map(|t| {
                SolverFamily::parse(t)
                    .ok_or_else(|| Failure::config(format!("unknown solver {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        cfg.experiment.solvers = Some(families);
    }
    if let Some(seed) = seed {
        cfg.experiment.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(
    config: &Path,
    out: &Path,
    solvers: Option<Vec<String>>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let cfg = load(config, solvers, seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: e.to_string(),
    })?;
    let output = pool.install(|| experiment::run(&cfg))?;
    let io = |e: std::io::Error| Failure {
        code: EXIT_FAILURE,
        message: format!("writing {}: {e}", out.display()),
    };
    fs::create_dir_all(out).map_err(io)?;
    fs::write(out.join(output.csv_name()), output.csv()).map_err(io)?;
    fs::write(out.join("summary.json"), output.summary_json()).map_err(io)?;
    eprintln!(
        "wrote {} rows to {}",
        output.rows.len(),
        out.join(output.csv_name()).display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            solvers,
            seed,
            threads: flag,
        } => threads(flag).and_then(|n| run(&config, &out, solvers, seed, n)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

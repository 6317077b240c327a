mod config;
mod error;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{parse_config, RunConfig};
use error::CliError;
use output::{Manifest, OutputDir};

const WORKERS_ENV: &str = "DIMER_DTC_WORKERS";

#[derive(Parser)]
#[command(name = "dimer-dtc", version, about = "Driven-dissipative Kerr dimer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; overrides the environment and the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed; overrides `numeric.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_workers(flag: Option<usize>, cfg: &RunConfig) -> Result<usize, CliError> {
    let env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::validation(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    let n = flag.or(env).or(cfg.workers).unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    if n == 0 {
        return Err(CliError::validation("`--workers` must be at least 1"));
    }
    Ok(n)
}

fn run(config: &Path, out: Option<PathBuf>, workers: Option<usize>, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.numeric.seed = Some(s);
    }
    let workers = resolve_workers(workers, &cfg)?;
    let root = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", cfg.experiment.name())));
    let mut dir = OutputDir::create(&root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let result = pool.install(|| run::execute(&cfg, &mut dir));
    match result {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            let manifest = Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                experiment: cfg.experiment.name().to_string(),
                config: serde_json::to_value(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?,
                workers,
                master_seed: cfg.seed(),
                wall_seconds: start.elapsed().as_secs_f64(),
                steps: summary.steps,
                warnings: summary.warnings,
                outputs: dir.records.clone(),
            };
            dir.write_manifest(&manifest)
        }
        Err(e) => {
            let _ = dir.write_json("error.json", &e.record());
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, workers, seed } => run(&config, out, workers, seed),
        Command::Validate { config } => load(&config).map(|c| {
            println!("{{\"status\":\"ok\",\"experiment\":\"{}\"}}", c.experiment.name());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let rec = serde_json::to_string(&e.record()).unwrap_or_else(|_| e.to_string());
            eprintln!("{rec}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use solscope_cli::commands::{self, Command};
use solscope_cli::config::parse_config;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration error (parse or validation, unusable parameters)
  3  numerical abort (NaN detected or H1 ceiling exceeded)
  4  non-convergence (limits, power iteration, ground-state shooting)
  5  input/output error

Environment:
  SOLSCOPE_THREADS  caps the number of worker threads
  RUST_LOG          log filter (default: info)";

#[derive(Debug, Parser)]
#[command(name = "solscope", version, about = "Radial NLS soliton-resolution numerics", after_help = EXIT_CODES)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    config: PathBuf,

    /// Output directory.
    #[arg(long, default_value = "solscope-out")]
    out: PathBuf,

    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SOLSCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .with_context(|| format!("SOLSCOPE_THREADS = {v:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading config {}", cli.config.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let outputs = commands::run(cli.command, &text, &cfg, &cli.out)?;
    for o in outputs {
        println!("{}", cli.out.join(o).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

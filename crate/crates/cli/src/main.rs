use std::path::PathBuf;
use std::process::ExitCode;

use banditlab::harness::{emit_all, run_experiment, ExperimentConfig};
use banditlab::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "banditlab", version, about = "Run bandit experiments from a TOML config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV series and SVG plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: `out` from the config, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only the named policy.
        #[arg(long)]
        policy: Option<String>,
    },
}

fn run(cmd: Command) -> Result<(), Error> {
    let Command::Run {
        config,
        trials,
        seed,
        out,
        policy,
    } = cmd;
    // An unreadable config file is still a config problem.
    let mut cfg = ExperimentConfig::load(&config).map_err(|e| if e.is_config() { e } else { Error::Config(e.to_string()) })?;
    if let Some(n) = trials {
        cfg.trials = n;
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    if let Some(name) = policy {
        cfg.retain_policy(&name)?;
    }
    cfg.validate()?;
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let results = run_experiment(&cfg)?;
    for p in &results.policies {
        println!("{}: mean final regret {}", p.name, p.mean_final_regret());
    }
    for path in emit_all(&results, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

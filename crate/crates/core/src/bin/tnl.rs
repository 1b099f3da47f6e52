use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tnl::checks::{run_suite, Suite};
use tnl::cli::{load_config, run, seed_from_env, RunOptions};
use tnl::Error;

#[derive(Parser)]
#[command(name = "tnl", version, about = "Transport-noise SPDE laboratory on the 2-torus")]
struct Cli {
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config and report every violation.
    Validate { config: PathBuf },
    /// Run an invariant suite: spectral, noise, dual, estimates, ldp or all.
    Checks {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot build a pool of {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ExperimentFailed(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> tnl::Result<bool> {
    match command {
        Command::Run { config, force, out } => {
            let cfg = load_config(&config)?;
            let opts = RunOptions {
                force,
                out,
                seed: seed_from_env()?,
            };
            let outcome = run(&cfg, &opts)?;
            for line in &outcome.summary {
                println!("{line}");
            }
            println!(
                "{} {}",
                if outcome.passed { "done:" } else { "FAILED:" },
                outcome.dir.display()
            );
            Ok(outcome.passed)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("valid: {:?}, N = {}, n = {:?}", cfg.kind, cfg.grid, cfg.n_list);
            Ok(true)
        }
        Command::Checks { suite, seed } => {
            let suite: Suite = suite.parse()?;
            let seed = seed_from_env()?.unwrap_or(seed);
            let results = run_suite(suite, seed)?;
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

//! Command-line experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ais::config::{PartitionSpec, RunConfig, SweepConfig, TargetSpec};
use ais::oracle::oracle_table;
use ais::runner::{run_experiment, run_sweep, RunnerOptions};
use ais::{recipes, Result};

#[derive(Parser)]
#[command(name = "ais", about = "Partition-based adaptive importance sampling harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Added to every seed in the config (disjoint replicate batches).
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Output directory; defaults to $AIS_OUT_DIR or `./out`.
    #[arg(long, env = "AIS_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for replicate fan-out (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run all seeds of a single experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Run a parameter sweep config.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Print the ground-truth oracle table for a target and partition.
    Oracle {
        target: PathBuf,
        partition: PathBuf,
    },
    /// List the built-in experiment recipes; pass a name to print its config.
    Recipes {
        name: Option<String>,
    },
}

fn init_pool(jobs: usize) {
    if jobs > 0 {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn runner_options(flags: &CommonFlags) -> RunnerOptions {
    RunnerOptions {
        out_dir: flags.out_dir.clone(),
        seed_offset: flags.seed_offset,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Accepts a single run config, a JSON array of them, or the `{"runs": [...]}`
/// wrapper emitted by `ais recipes <name>`.
fn read_run_configs(path: &PathBuf) -> Result<Vec<RunConfig>> {
    let value: serde_json::Value = read_json(path)?;
    let configs = if let Some(runs) = value.get("runs") {
        serde_json::from_value(runs.clone())?
    } else if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(configs)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, flags } => {
            init_pool(flags.jobs);
            let opts = runner_options(&flags);
            for cfg in read_run_configs(&config)? {
                let out = run_experiment(&cfg, &opts)?;
                eprintln!(
                    "wrote {} per-seed CSVs, {} and {}",
                    out.per_seed_csv.len(),
                    out.aggregate_csv.display(),
                    out.summary_json.display()
                );
            }
        }
        Command::Sweep { config, flags } => {
            init_pool(flags.jobs);
            let cfg: SweepConfig = read_json(&config)?;
            let out = run_sweep(&cfg, &runner_options(&flags))?;
            eprintln!("wrote sweep summary {}", out.summary_csv.display());
        }
        Command::Oracle { target, partition } => {
            let target_spec: TargetSpec = read_json(&target)?;
            let partition_spec: PartitionSpec = read_json(&partition)?;
            let density = target_spec.build()?;
            let cells = partition_spec.build(density.domain())?;
            let table = oracle_table(&density, &cells, partition_spec.alpha)?;
            println!("{}", serde_json::to_string_pretty(&table)?);
        }
        Command::Recipes { name } => match name {
            Some(name) => {
                let recipe = recipes::find(&name)?;
                println!("{}", serde_json::to_string_pretty(&recipe.config)?);
            }
            None => {
                for r in recipes::all() {
                    println!("{:<20} {}", r.name, r.description);
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({ "error": e.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

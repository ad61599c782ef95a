use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hetbo::harness::{
    ablation_file_name, load_records, run_ablation, run_experiment, save_records, save_summary, summarize,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "hetbo", version, about = "Transfer-learning BO experiments across heterogeneous search spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write records.csv (and summary.csv for 2+ replications).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the experiment for several source-trial counts.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean best-so-far and two-standard-error half-widths per method and iteration.
    Summarize {
        /// A records CSV, or a directory containing records.csv.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    replications: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    if let Some(r) = replications {
        config.replications = r;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    config.validate()?;
    Ok(config)
}

fn summary_name(records_file: &str) -> String {
    records_file.replacen("records", "summary", 1)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, seed, replications, out } => {
            let config = load_config(&config, seed, replications, out)?;
            let records = run_experiment(&config)?;
            let path = config.output_dir.join("records.csv");
            save_records(&path, &records)?;
            log::info!("wrote {} records to {}", records.len(), path.display());
            if config.replications >= 2 {
                let path = config.output_dir.join("summary.csv");
                save_summary(&path, &summarize(&records)?)?;
                log::info!("wrote {}", path.display());
            }
        }
        Command::Ablate { config, levels, seed, out } => {
            let config = load_config(&config, seed, None, out)?;
            for level in run_ablation(&config, &levels)? {
                log::info!("wrote {} records to {}", level.records.len(), level.path.display());
                if config.replications >= 2 {
                    let path = config.output_dir.join(summary_name(&ablation_file_name(level.source_trials)));
                    save_summary(&path, &summarize(&level.records)?)?;
                    log::info!("wrote {}", path.display());
                }
            }
        }
        Command::Summarize { input, out } => {
            let file = if input.is_dir() { input.join("records.csv") } else { input };
            if !file.exists() {
                bail!("{} does not exist", file.display());
            }
            let records = load_records(&file).with_context(|| format!("reading {}", file.display()))?;
            save_summary(&out, &summarize(&records)?)?;
            log::info!("wrote {}", out.display());
        }
    }
    Ok(())
}

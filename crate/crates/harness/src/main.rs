use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use confound_core::envs::{EnvName, EnvVariant};
use confound_lab::cli::{check_representation, dump, CheckArgs};
use confound_lab::probe::{kl_probe_path, write_probe, Direction};
use confound_lab::{aggregate_dir, reproduce, run_experiment, ExperimentConfig, LabError, Result};

#[derive(Parser)]
#[command(name = "confound-lab", version, about = "Policy-confounding experiments on small gridworlds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of a config file and write its run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Skip training when the directory already holds this run.
        #[arg(long)]
        reuse: bool,
    },
    /// Run the preset matrix of a figure (fig1, fig4..fig9).
    Reproduce {
        #[arg(long)]
        figure: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long)]
        reuse: bool,
    },
    /// Signal-permutation KL grid of a PPO checkpoint.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "frozen-tmaze")]
        env: EnvName,
        #[arg(long, default_value = "g2p")]
        direction: Direction,
        /// Step label written to the CSV.
        #[arg(long, default_value_t = 0)]
        step: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact history-representation checks.
    CheckRepresentation {
        #[arg(long)]
        env: EnvName,
        #[arg(long, default_value = "train")]
        variant: EnvVariant,
        /// markov, pi-markov, confounding, subset-confounding,
        /// support-inclusion, dbn, minimal, pi-minimal or superfluous.
        #[arg(long)]
        check: confound_lab::cli::Check,
        /// Keep-set spec such as `t1+:x2` or `*:x1,x2`.
        #[arg(long)]
        rep: Option<String>,
        /// uniform, optimal, random:<seed> or greedy:<seed>.
        #[arg(long, default_value = "uniform")]
        policy: String,
        #[arg(long)]
        policy2: Option<String>,
        #[arg(long, default_value_t = 6)]
        horizon: usize,
    },
    /// Print an environment's model and grid.
    DumpEnv {
        #[arg(long)]
        env: EnvName,
        #[arg(long, default_value = "train")]
        variant: EnvVariant,
    },
    /// Recompute summary.csv from a run directory's returns.csv.
    Aggregate {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { config, out, jobs, reuse } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|source| LabError::Io { path: config.display().to_string(), source })?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let run = run_experiment(&cfg, jobs, reuse)?;
            println!("{} records in {}", run.records.len(), run.dir.display());
        }
        Cmd::Reproduce { figure, out, jobs, reuse } => {
            for run in reproduce(&figure, &out, jobs, reuse)? {
                println!("{}: {} records{}", run.dir.display(), run.records.len(), if run.reused { " (reused)" } else { "" });
            }
        }
        Cmd::Probe { checkpoint, env, direction, step, out } => {
            let grid = kl_probe_path(&checkpoint, env, step, direction)?;
            match out {
                Some(p) => write_probe(&grid, &p)?,
                None => print!("{}", grid.to_csv()),
            }
        }
        Cmd::CheckRepresentation { env, variant, check, rep, policy, policy2, horizon } => {
            print!("{}", check_representation(&CheckArgs { env, variant, check, rep, policy, policy2, horizon })?);
        }
        Cmd::DumpEnv { env, variant } => print!("{}", dump(env, variant)),
        Cmd::Aggregate { dir } => {
            let rows = aggregate_dir(&dir)?;
            println!("{} rows written to {}", rows.len(), dir.join("summary.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

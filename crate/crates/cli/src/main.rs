use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use memlqr_cli::commands::{self, holdout_realizations, training_realizations, write_trajectory_csv};
use memlqr_cli::files::{read_json, PolicyFile, RealizationFile};
use memlqr_cli::{CliError, ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "memlqr", version, about = "Moreau-envelope meta-policies for uncertain LQR families")]
struct Cli {
    /// Experiment config (JSON). Defaults describe the benchmark experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for run logs and evaluation reports.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the training realizations and write them with a manifest.
    Generate,
    /// Train a policy on realization files (sampled from the config if none).
    Train { realizations: Vec<PathBuf> },
    /// Fine-tune a policy on a held-out realization.
    Adapt {
        #[arg(long)]
        policy: PathBuf,
        /// Held-out realization file; drawn from the holdout stream if absent.
        #[arg(long)]
        holdout: Option<PathBuf>,
        /// Init label; defaults to the policy's algorithm.
        #[arg(long)]
        label: Option<String>,
        /// Overrides the config's adaptation step.
        #[arg(long)]
        step: Option<f64>,
        /// Overrides the config's adaptation iteration count.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Cost and stability of a policy on a realization.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        realization: PathBuf,
        /// Also write a rollout of this many steps to trajectory.csv.
        #[arg(long)]
        trajectory: Option<usize>,
    },
    /// Train every configured method and compare their adaptation on
    /// held-out realizations.
    Compare,
}

fn print_paths(paths: &[&Path]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let format = match cli.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    if let Command::Adapt { step, iters, .. } = &cli.command {
        config.adapt.step = step.unwrap_or(config.adapt.step);
        config.adapt.iters = iters.unwrap_or(config.adapt.iters);
    }
    let r = config.resolve()?;
    match cli.command {
        Command::Generate => {
            let written = commands::cmd_generate(&r, &out)?;
            print_paths(&written.iter().map(PathBuf::as_path).collect::<Vec<_>>());
        }
        Command::Train { realizations } => {
            let systems = if realizations.is_empty() {
                training_realizations(&r)?
            } else {
                realizations
                    .iter()
                    .map(|p| read_json::<RealizationFile>(p)?.to_system())
                    .collect::<Result<Vec<_>, _>>()?
            };
            let t = commands::cmd_train(&r, &systems, &out, format)?;
            print_paths(&[&t.policy_path, &t.log_path]);
        }
        Command::Adapt { policy, holdout, label, .. } => {
            let policy = read_json::<PolicyFile>(&policy)?.to_policy()?;
            let z = match holdout {
                Some(p) => read_json::<RealizationFile>(&p)?.to_system()?,
                None => holdout_realizations(&r, 1)?.remove(0),
            };
            let label = label
                .or_else(|| policy.meta.as_ref().map(|m| m.algorithm.clone()))
                .unwrap_or_else(|| "init".into());
            let a = commands::cmd_adapt(&r, &policy, &z, &label, &out)?;
            print_paths(&[&a.path]);
        }
        Command::Eval { policy, realization, trajectory } => {
            let policy = read_json::<PolicyFile>(&policy)?.to_policy()?;
            let system = read_json::<RealizationFile>(&realization)?.to_system()?;
            let (report, traj) = commands::cmd_eval(&r, &policy, &system, trajectory)?;
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(|e| CliError::validation(e.to_string()))?
                ),
                Format::Csv => {
                    println!("cost,stable,spectral_radius");
                    println!("{},{},{}", report.cost, report.stable, report.spectral_radius);
                }
            }
            if let Some(traj) = traj {
                std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
                let path = out.join("trajectory.csv");
                let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
                write_trajectory_csv(file, &traj)?;
                eprintln!("trajectory written to {}", path.display());
            }
        }
        Command::Compare => {
            let (written, _) = commands::cmd_compare(&r, &out)?;
            print_paths(&written.iter().map(PathBuf::as_path).collect::<Vec<_>>());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glf_cli::commands;
use glf_cli::config::ExperimentConfig;
use glf_cli::error::{CliError, CliResult};
use glf_core::loss::LpmVariant;
use glf_core::stats::TForm;

#[derive(Parser)]
#[command(
    name = "glf",
    about = "Self-supervised representation learning experiments: aligning + constraining objectives with adaptive distribution calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Dataset generation / split seed.
    #[arg(long)]
    seed_data: Option<u64>,
    /// Parameter initialization seed.
    #[arg(long)]
    seed_model: Option<u64>,
    /// Batching / augmentation seed.
    #[arg(long)]
    seed_train: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// LPM parameterization: shifted, literal, or concentrated.
    #[arg(long)]
    lpm_variant: Option<String>,
    /// Student-t form: standard or paper-literal.
    #[arg(long)]
    t_form: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain encoder + head under the configured objective and evaluate.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on the configured dataset.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Finite-difference verification of every loss gradient.
    Gradcheck {
        /// Number of random seeds per loss.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// The constraint-comparison study: align_only + each of (a)-(e) and ADC.
    ToyConstraints {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Cross-product sweep over the (nu, upsilon) grids.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = overrides.seed_data {
        cfg.seeds.data = s;
    }
    if let Some(s) = overrides.seed_model {
        cfg.seeds.model = s;
    }
    if let Some(s) = overrides.seed_train {
        cfg.seeds.train = s;
    }
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    if let Some(v) = &overrides.lpm_variant {
        cfg.constraining.lpm_variant = match v.as_str() {
            "shifted" => LpmVariant::Shifted,
            "literal" => LpmVariant::Literal,
            "concentrated" => LpmVariant::Concentrated(cfg.lpm_c),
            _ => {
                return Err(CliError::Config(format!(
                    "--lpm-variant: expected shifted|literal|concentrated, got '{v}'"
                )))
            }
        };
    }
    if let Some(t) = &overrides.t_form {
        cfg.constraining.adc.t_form = match t.as_str() {
            "standard" => TForm::Standard,
            "paper-literal" | "paper_literal" => TForm::PaperLiteral,
            _ => {
                return Err(CliError::Config(format!(
                    "--t-form: expected standard|paper-literal, got '{t}'"
                )))
            }
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let record = commands::cmd_train(&cfg)?;
            if let Some(last) = record.epoch_losses.last() {
                println!(
                    "trained {} epochs: l_ctr {:.6} l_dcm {:.6} l_lpm {:.6} total {:.6}",
                    record.epoch_losses.len(),
                    last.mean.l_ctr,
                    last.mean.l_dcm,
                    last.mean.l_lpm,
                    last.mean.total
                );
            }
            println!(
                "linear {:.4}  5-nn {:.4}  cond_var {:.4}  ({:.1}s)",
                record.metrics.linear_acc,
                record.metrics.knn_acc,
                record.metrics.cond_variance,
                record.wall_clock_secs
            );
            println!("checkpoint: {}", record.checkpoint_path.display());
            println!("losses:     {}", record.losses_path.display());
            println!("metrics:    {}", record.metrics_path.display());
        }
        Command::Eval {
            config,
            checkpoint,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let metrics = commands::cmd_eval(&cfg, &checkpoint)?;
            for (name, value) in glf_core::eval::MetricsReport::FIELD_NAMES
                .iter()
                .zip(metrics.values())
            {
                println!("{name:<20} {value}");
            }
        }
        Command::Gradcheck { seeds } => {
            commands::cmd_gradcheck(seeds)?;
        }
        Command::ToyConstraints { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let table = commands::cmd_toy_constraints(&cfg)?;
            println!("constraint study written to {}", table.path.display());
            for ((name, _), curve) in commands::TOY_CONSTRAINTS.iter().zip(&table.accuracies) {
                println!(
                    "{name:<16} final 5-nn {:.4}",
                    curve.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Sweep { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (cells, path) = commands::cmd_sweep(&cfg)?;
            println!("{} sweep cells written to {}", cells.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

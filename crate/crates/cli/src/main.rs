use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use mtpinn_cli::commands::{self, DataSource};
use mtpinn_cli::config::{FileConfig, PresetArg, Scale};

#[derive(Parser)]
#[command(
    name = "mtpinn",
    about = "Train, evaluate and backtest MT-PINN optimal-execution policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Root seed; all randomness derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker cap. The implementation is single-threaded; values above 1
    /// are accepted and ignored.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a preset through its schedule and save checkpoints.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Full TOML config; overrides --scale defaults entirely.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model preset: mtpinn, pinn-curr or vanilla.
        #[arg(long, default_value = "mtpinn")]
        preset: PresetArg,
        /// Target risk aversion lambda*.
        #[arg(long)]
        lambda: Option<f64>,
        /// Scale profile: desk or paper.
        #[arg(long, default_value = "desk")]
        scale: Scale,
    },
    /// Score a checkpoint: terminal inventories over GBM paths and
    /// surface errors against the closed form.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of seeded GBM evaluation paths.
        #[arg(long, default_value_t = 200)]
        paths: usize,
        /// Terminal-inventory tolerance for the p_eps rate.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Execute TWAP plus checkpointed policies over intraday windows.
    Backtest {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint file; repeat for several lambdas.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        /// Feed CSV (`timestamp,mid_price`); omit for a synthetic feed.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Trading days of synthetic feed when --data is absent.
        #[arg(long, default_value_t = 7)]
        days: usize,
        /// Daily volatility of the synthetic feed.
        #[arg(long, default_value_t = 0.0038)]
        sigma: f64,
        /// Residual-inventory tolerance on the normalized position.
        #[arg(long, default_value_t = commands::DEFAULT_BACKTEST_EPS)]
        eps: f64,
    },
    /// Generate a synthetic GBM feed CSV.
    SimulateFeed {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 7)]
        days: usize,
        #[arg(long, default_value_t = 0.0038)]
        sigma: f64,
        #[arg(long, default_value_t = 590.0)]
        s0_min: f64,
        #[arg(long, default_value_t = 620.0)]
        s0_max: f64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            common,
            config,
            preset,
            lambda,
            scale,
        } => {
            let mut fc = match &config {
                Some(path) => FileConfig::from_path(path)?,
                None => FileConfig::for_scale(preset.0, scale),
            };
            if config.is_none() {
                fc.preset = preset.0;
            }
            if let Some(l) = lambda {
                fc.hjb.lambda = l;
            }
            commands::cmd_train(&fc, config.as_deref(), common.seed, &common.out)?;
        }
        Command::Eval {
            common,
            checkpoint,
            paths,
            eps,
        } => {
            commands::cmd_eval(&checkpoint, &common.out, common.seed, paths, eps)?;
        }
        Command::Backtest {
            common,
            checkpoint,
            data,
            days,
            sigma,
            eps,
        } => {
            let source = match data {
                Some(path) => DataSource::Csv(path),
                None => DataSource::Synthetic { days, sigma },
            };
            commands::cmd_backtest(&checkpoint, &source, &common.out, common.seed, eps)?;
        }
        Command::SimulateFeed {
            common,
            days,
            sigma,
            s0_min,
            s0_max,
        } => {
            commands::cmd_simulate_feed(&common.out, days, sigma, (s0_min, s0_max), common.seed)?;
        }
    }
    Ok(())
}

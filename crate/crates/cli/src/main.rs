//! `uavrisk` — pre-flight battery-depletion risk for multirotor missions.

mod config;
mod corpus;
mod mission;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uavrisk::metrics::SegmentConfig;
use uavrisk::Error;

use crate::config::{load_model, MissionConfig, ModelKind};
use crate::corpus::Predictor;

/// Environment variable holding the default worker count.
const WORKERS_ENV: &str = "UAVRISK_WORKERS";

#[derive(Parser)]
#[command(name = "uavrisk", version, about = "Pre-flight energy risk assessment for UAV missions")]
struct Cli {
    /// Worker threads (default: $UAVRISK_WORKERS, else all cores). Does not affect results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo energy distribution and CVaR for one planned trajectory.
    Assess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// CVaR over goals sampled around a base on an occupancy map.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump one deterministic simulated run.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        run_index: usize,
    },
    /// MAPE and sectioned relative energy error over a flight corpus.
    EvalModel {
        /// TCN weights or analytical coefficients (JSON).
        #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
        model: Option<PathBuf>,
        /// Predict the measured power itself (pipeline check).
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SegmentConfig::default().threshold_deg)]
        threshold_deg: f64,
        #[arg(long, default_value_t = SegmentConfig::default().dwell_s)]
        dwell_s: f64,
    },
    /// Least-squares fit of the analytical baseline power model.
    FitBaseline {
        #[arg(long)]
        corpus: PathBuf,
        /// Output coefficients JSON.
        #[arg(long)]
        out: PathBuf,
        /// Only use flights with this split label.
        #[arg(long, default_value = "train")]
        split: String,
        /// Use every flight regardless of split.
        #[arg(long)]
        all_splits: bool,
    },
    /// Print a config with every default filled in.
    PrintConfig,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> uavrisk::Result<()> {
    let w = workers(cli.workers)?;
    match cli.command {
        Command::Assess { config, out } => mission::assess(&config, &out, w),
        Command::Coverage { config, out } => mission::coverage(&config, &out, w),
        Command::Simulate { config, out, run_index } => mission::simulate(&config, &out, run_index),
        Command::EvalModel {
            model,
            oracle,
            corpus,
            out,
            threshold_deg,
            dwell_s,
        } => {
            let predictor = if oracle {
                Predictor::Oracle
            } else {
                Predictor::Model(load_model(ModelKind::Auto, 0.0, model.as_deref())?)
            };
            let seg = SegmentConfig { threshold_deg, dwell_s };
            if !(threshold_deg > 0.0 && dwell_s >= 0.0) {
                return Err(Error::Config("segmentation needs threshold_deg > 0 and dwell_s >= 0".into()));
            }
            corpus::eval_model(&corpus, predictor, seg, &out)
        }
        Command::FitBaseline {
            corpus,
            out,
            split,
            all_splits,
        } => corpus::fit_baseline(&corpus, (!all_splits).then_some(split.as_str()), &out),
        Command::PrintConfig => {
            print!("{}", MissionConfig::template().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Input(_) | Error::Config(_) | Error::Load { .. } | Error::Parse { .. } | Error::Io { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

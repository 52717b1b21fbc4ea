//! `levy-bigjump`: simulate heavy-tailed Lévy paths, run the stratified
//! estimators, and check the limit statements.
//!
//! Exit codes: 0 on success, 1 on an estimator error or a failed check,
//! 2 on a configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levy_bigjump::mc::with_workers;

use commands::{EstimateArgs, Quantity, RenewalArgs};
use config::{parse_ladder, ConfigError, ExperimentConfig, Ladder};

#[derive(Parser, Debug)]
#[command(name = "levy-bigjump", version, about = "Single-big-jump Monte Carlo for heavy-tailed Lévy processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Time horizon or ascending ladder `T[,T…]`.
    #[arg(long, value_parser = parse_ladder)]
    t: Option<Ladder>,
    /// Replicates per Monte Carlo component (at least 100).
    #[arg(long)]
    n: Option<u64>,
    /// Master seed.
    #[arg(long, env = "LEVY_BIGJUMP_SEED", default_value_t = 1)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Print the JSON result to stdout.
    #[arg(long)]
    json: bool,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample paths and write a per-path summary CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Starting level.
        #[arg(long, default_value_t = 0.0)]
        x: f64,
    },
    /// Run one estimator over the t ladder.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        quantity: Quantity,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Test function F (JSON); defaults to the Feller survival function.
        #[arg(long)]
        f: Option<PathBuf>,
    },
    /// Run a verification check (or `all`) and write the report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theorem: String,
        /// Gaussian grid step.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Estimate the renewal functions V and V̂ on a grid.
    Renewal {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 15.0)]
        grid_max: f64,
        #[arg(long, default_value_t = 31)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        reference: f64,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Survival ladder and regime of a branching process in the model environment.
    Cbre {
        #[command(flatten)]
        common: Common,
        /// Branching mechanism (JSON); defaults to the Feller diffusion.
        #[arg(long)]
        branching: Option<PathBuf>,
    },
    /// Print the theorem-id to command map.
    ListTheorems {
        #[arg(long)]
        json: bool,
    },
}

fn experiment(common: &Common, default_t: &[f64]) -> anyhow::Result<ExperimentConfig> {
    let cfg = ExperimentConfig {
        model: config::load_model(&common.model)?,
        t_ladder: common.t.clone().map_or_else(|| default_t.to_vec(), |l| l.0),
        n: common.n,
        seed: common.seed,
        workers: common.workers,
        out_dir: common.out.clone(),
        json: common.json,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (cfg, job): (ExperimentConfig, Box<dyn FnOnce(&ExperimentConfig) -> anyhow::Result<bool> + Send>) =
        match cli.command {
            Command::ListTheorems { json } => return commands::list_theorems(json),
            Command::Simulate { common, x } => {
                (experiment(&common, &[50.0])?, Box::new(move |c| commands::simulate(c, x)))
            }
            Command::Estimate {
                common,
                quantity,
                x,
                y,
                lambda,
                f,
            } => {
                let f = config::load_f(f.as_deref())?;
                let cfg = experiment(&common, &[25.0, 50.0, 100.0])?;
                let job = move |c: &ExperimentConfig| {
                    commands::estimate(
                        c,
                        &EstimateArgs {
                            quantity,
                            x,
                            y,
                            lambda,
                            f: &f,
                        },
                    )
                };
                (cfg, Box::new(job))
            }
            Command::Verify { common, theorem, step } => {
                let explicit = common.t.is_some();
                let cfg = experiment(&common, &[25.0, 50.0, 100.0])?;
                (cfg, Box::new(move |c| commands::verify(c, &theorem, explicit, step)))
            }
            Command::Renewal {
                common,
                grid_max,
                points,
                reference,
                horizon,
            } => {
                let args = RenewalArgs {
                    grid_max,
                    points,
                    reference,
                    horizon,
                };
                (experiment(&common, &[1.0])?, Box::new(move |c| commands::renewal(c, &args)))
            }
            Command::Cbre { common, branching } => {
                let b = config::load_branching(branching.as_deref())?;
                (experiment(&common, &[25.0, 50.0, 100.0])?, Box::new(move |c| commands::cbre(c, &b)))
            }
        };
    let workers = cfg.workers;
    with_workers(workers, move || job(&cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

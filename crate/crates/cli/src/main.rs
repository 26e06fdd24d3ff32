use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use interdiction::experiments::{self, ExperimentConfig, Mode, SweepParam, SweepSpec};
use interdiction::{NodeId, PtParams, SearchConfig, TruncationConfig};

#[derive(Parser)]
#[command(name = "interdict", version, about = "Stackelberg solvers for time-critical network interdiction games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one equilibrium.
    Solve {
        #[arg(long, value_parser = ["se", "mse", "se-pt", "mse-pt"])]
        mode: String,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pt: PtArgs,
    },
    /// Monte Carlo simulation of deliveries along one path.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// JSON map from node id to interdiction probability.
        #[arg(long = "x-file")]
        x_file: PathBuf,
        /// Comma-separated node ids; origin and destination may be omitted.
        #[arg(long)]
        path: String,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "step-cap", default_value_t = 10_000)]
        step_cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and tabulate equilibria.
    Sweep {
        #[arg(long, value_parser = ["R", "gamma", "lambda"])]
        which: String,
        /// Comma-separated values; defaults to the standard grid.
        #[arg(long)]
        values: Option<String>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pt: PtArgs,
    },
    /// Run an experiment described by a JSON configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    instance: PathBuf,
    /// Output file; `.csv` writes CSV plus a JSON mirror, anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    mesh: f64,
    #[arg(long = "min-mesh", default_value_t = 1e-4)]
    min_mesh: f64,
    #[arg(long, default_value_t = 0.5)]
    contraction: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long = "max-evals", default_value_t = 20_000)]
    max_evals: usize,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long = "k-max", default_value_t = 1000)]
    k_max: usize,
}

impl Common {
    fn search(&self) -> SearchConfig {
        SearchConfig {
            initial_mesh: self.mesh,
            contraction_factor: self.contraction,
            min_mesh: self.min_mesh,
            max_evals: self.max_evals,
            restarts: self.restarts,
            rng_seed: self.seed,
        }
    }

    fn trunc(&self) -> TruncationConfig {
        TruncationConfig { epsilon: self.epsilon, k_max: self.k_max }
    }
}

#[derive(Args)]
struct PtArgs {
    #[arg(long = "R-I", default_value_t = 20.0)]
    r_i: f64,
    #[arg(long = "R-U", default_value_t = 20.0)]
    r_u: f64,
    #[arg(long = "lambda-I", default_value_t = 2.5)]
    lambda_i: f64,
    #[arg(long = "lambda-U", default_value_t = 2.5)]
    lambda_u: f64,
    #[arg(long = "beta-I", default_value_t = 0.6)]
    beta_i: f64,
    #[arg(long = "beta-U", default_value_t = 0.6)]
    beta_u: f64,
    #[arg(long = "gamma-I", default_value_t = 0.5)]
    gamma_i: f64,
    #[arg(long = "gamma-U", default_value_t = 0.5)]
    gamma_u: f64,
    /// Treat the interdictor as fully rational.
    #[arg(long = "rational-I")]
    rational_i: bool,
    /// Treat the operator as fully rational.
    #[arg(long = "rational-U")]
    rational_u: bool,
}

impl PtArgs {
    fn params(&self) -> Result<(PtParams, PtParams)> {
        let pi = if self.rational_i {
            PtParams::rational()
        } else {
            PtParams::new(self.r_i, self.lambda_i, self.beta_i, self.gamma_i)?
        };
        let pu = if self.rational_u {
            PtParams::rational()
        } else {
            PtParams::new(self.r_u, self.lambda_u, self.beta_u, self.gamma_u)?
        };
        Ok((pi, pu))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().with_context(|| format!("cannot parse {t:?}")))
        .collect()
}

fn config_for(cli: Cli) -> Result<ExperimentConfig> {
    Ok(match cli.command {
        Command::Solve { mode, common, pt } => {
            let (pi, pu) = pt.params()?;
            let mut cfg = ExperimentConfig::new(&common.instance, mode.parse::<Mode>()?);
            cfg.pt_params_i = pi;
            cfg.pt_params_u = pu;
            cfg.search = common.search();
            cfg.trunc = common.trunc();
            cfg.output_path = common.out;
            cfg
        }
        Command::Simulate { instance, x_file, path, trials, seed, step_cap, out } => {
            let mut cfg = ExperimentConfig::new(instance, Mode::Simulate);
            cfg.x_path = Some(x_file);
            cfg.path = parse_list::<u32>(&path)?.into_iter().map(NodeId).collect();
            cfg.trials = trials;
            cfg.search.rng_seed = seed;
            cfg.step_cap = step_cap;
            cfg.output_path = out;
            cfg
        }
        Command::Sweep { which, values, common, pt } => {
            let (pi, pu) = pt.params()?;
            let param: SweepParam = which.parse()?;
            let values = match values {
                Some(v) => parse_list::<f64>(&v)?,
                None => param.default_values(),
            };
            let mut cfg = ExperimentConfig::new(&common.instance, Mode::Sweep);
            cfg.pt_params_i = pi;
            cfg.pt_params_u = pu;
            cfg.sweep = Some(SweepSpec { param, values });
            cfg.search = common.search();
            cfg.trunc = common.trunc();
            cfg.output_path = common.out;
            cfg
        }
        Command::Run { config } => ExperimentConfig::load(&config)?,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config_for(cli).and_then(|cfg| {
        let out = experiments::run(&cfg)?;
        if cfg.output_path.is_none() {
            println!("{}", out.table.to_json());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

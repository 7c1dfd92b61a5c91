use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use planner_cli::config::StorageSelection;
use planner_cli::{run, CliError, Command, RunConfig};
use storage_planner::horizon::ControlHorizon;
use storage_planner::trial::PenetrationMode;

/// Storage siting and sizing by optimal dispatch against fluctuating renewables.
#[derive(Parser)]
#[command(name = "planner", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Global {
    /// Grid JSON file, or bundled:<name> for a shipped grid.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Master seed; every trial derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Control steps per horizon.
    #[arg(long, global = true)]
    tf: Option<usize>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fixed renewable penetration instead of a uniform draw on [0, 0.5].
    #[arg(long, global = true)]
    penetration: Option<f64>,
    /// Peak relative fluctuation.
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    /// Harmonics in each fluctuation profile.
    #[arg(long, global = true)]
    harmonics: Option<usize>,
    /// Storage node ids, comma-separated; all nodes by default.
    #[arg(long, global = true, value_delimiter = ',', conflicts_with = "nodes")]
    storage: Option<Vec<String>>,
    /// File listing storage node ids.
    #[arg(long, global = true)]
    nodes: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Least-cost base dispatch.
    Dcopf,
    /// Renewable fluctuation profile of one trial.
    Profiles,
    /// Optimal storage dispatch for one trial.
    Dispatch {
        /// Profiles CSV as written by `profiles`.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Iterative reduction of the storage node set.
    Place {
        /// Relative capacity slack allowed by a cut.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Stop once the chosen threshold is at most this.
        #[arg(long)]
        epsilon_prime: Option<f64>,
    },
    /// Monte Carlo metrics binned by penetration.
    Sweep {
        /// Equal-width penetration bins over [0, 0.5].
        #[arg(long)]
        bins: Option<usize>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(grid) = &g.grid {
        cfg.grid = grid.clone();
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(tf) = g.tf {
        cfg.horizon = ControlHorizon {
            steps: tf,
            ..cfg.horizon
        };
    }
    if let Some(n) = g.trials {
        cfg.trials = n;
    }
    if let Some(p) = g.penetration {
        cfg.profile.penetration = PenetrationMode::Fixed(p);
    }
    if let Some(a) = g.amplitude {
        cfg.profile.amplitude = a;
    }
    if let Some(k) = g.harmonics {
        cfg.profile.harmonics = k;
    }
    if let Some(ids) = &g.storage {
        cfg.storage = StorageSelection::List { nodes: ids.clone() };
    }
    if let Some(path) = &g.nodes {
        cfg.storage = StorageSelection::File {
            path: path.display().to_string(),
        };
    }
    match &cli.command {
        Sub::Dispatch { profiles: Some(p) } => cfg.profile.file = Some(p.display().to_string()),
        Sub::Place {
            epsilon,
            epsilon_prime,
        } => {
            if let Some(e) = epsilon {
                cfg.placement.epsilon_rel = *e;
            }
            if let Some(e) = epsilon_prime {
                cfg.placement.epsilon_prime = *e;
            }
        }
        Sub::Sweep { bins: Some(b) } => cfg.bins = *b,
        _ => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLANNER_LOG", "warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Dcopf => Command::Dcopf,
        Sub::Profiles => Command::Profiles,
        Sub::Dispatch { .. } => Command::Dispatch,
        Sub::Place { .. } => Command::Place,
        Sub::Sweep { .. } => Command::Sweep,
    };
    let result = build_config(&cli).and_then(|cfg| run(command, &cfg, &cli.global.out, cli.global.jobs));
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Batch front end for the `langevin-wall` simulator.
//!
//! Exit codes: 0 success, 1 failed verification, 2 usage or domain error,
//! 3 I/O or file-format error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod output;

/// Variable capping the worker pool.
pub const THREADS_ENV: &str = "LANGEVIN_WALL_THREADS";

#[derive(Debug)]
pub enum Failure {
    Verify,
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verify => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<langevin_wall::Error> for Failure {
    fn from(e: langevin_wall::Error) -> Self {
        use langevin_wall::Error as E;
        match e {
            E::Io(_) | E::Format(_) => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "langevin-wall",
    version,
    about = "Stable Langevin particles at a reflecting-diffusive wall"
)]
struct Cli {
    /// Flat `key = value` file of flag defaults; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate normalised excursions and write a pool file.
    Harvest(HarvestArgs),
    /// Predicted regime next to certified verdicts of simulated chains.
    Regime(RegimeArgs),
    /// Run the invariant checks on a pool; exit 1 on any failure.
    Verify(VerifyArgs),
    /// Growth rate of ln tau_n.
    Rate(RateArgs),
    /// Hill index of the accumulation time.
    Tail(TailArgs),
    /// Survival exponent of the free first passage.
    Persistence(PersistenceArgs),
    /// Boundary trace histograms and the boundary relation check.
    Trace(TraceArgs),
    /// Fractional moments of the impact velocity.
    Mellin(MellinArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (capped by LANGEVIN_WALL_THREADS).
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Existing directory for output files.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Initial step relative to the excursion time scale.
    #[arg(long, default_value_t = 1e-2)]
    pub dt_base: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Wall {
    /// Probability of an elastic impact.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Restitution coefficient.
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Damping of diffusive re-emissions.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Temperature of the Maxwellian wall law.
    #[arg(long, default_value_t = 1.0)]
    pub maxwell_theta: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PoolSource {
    /// Pool file; harvested on the fly when absent.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub pool_size: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HarvestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub count: usize,
    /// File name inside the output directory.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RegimeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub wall: Wall,
    #[command(flatten)]
    #[serde(flatten)]
    pub pool: PoolSource,
    #[arg(long, default_value_t = 10_000)]
    pub n_max: usize,
    #[arg(long, default_value_t = 200)]
    pub replicas: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub pool: PoolSource,
    /// Mellin orders to check, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.25])]
    pub nu: Vec<f64>,
    /// Direct excursions compared with the rescaled pool.
    #[arg(long, default_value_t = 10_000)]
    pub scaling_samples: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub wall: Wall,
    #[command(flatten)]
    #[serde(flatten)]
    pub pool: PoolSource,
    #[arg(long, default_value_t = 500)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1_000)]
    pub chains: usize,
    /// Trailing window of the slope fit; half the chain by default.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TailArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub wall: Wall,
    #[command(flatten)]
    #[serde(flatten)]
    pub pool: PoolSource,
    #[arg(long, default_value_t = 10_000)]
    pub n_max: usize,
    #[arg(long, default_value_t = 20_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Order statistics used by the Hill estimator.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PersistenceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub u0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tmin: f64,
    #[arg(long, default_value_t = 100.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 12)]
    pub points: usize,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TraceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub wall: Wall,
    /// Time horizon.
    #[arg(long = "T", alias = "horizon", default_value_t = 10.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 10)]
    pub t_bins: usize,
    #[arg(long, default_value_t = 32)]
    pub u_bins: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MellinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub pool: PoolSource,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75, 1.0, 1.25])]
    pub nu: Vec<f64>,
}

fn worker_count(requested: Option<usize>) -> Result<usize, Failure> {
    let mut n = match requested {
        Some(0) => return Err(Failure::Usage("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let cap: usize = v.trim().parse().ok().filter(|&c| c > 0).ok_or_else(|| {
            Failure::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        n = n.min(cap);
    }
    Ok(n)
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Harvest(a) => &a.common,
        Command::Regime(a) => &a.common,
        Command::Verify(a) => &a.common,
        Command::Rate(a) => &a.common,
        Command::Tail(a) => &a.common,
        Command::Persistence(a) => &a.common,
        Command::Trace(a) => &a.common,
        Command::Mellin(a) => &a.common,
    }
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let args = config::merge(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => return Err(Failure::Usage(e.render().to_string())),
        Err(e) => {
            let _ = write!(std::io::stdout().lock(), "{}", e.render());
            return Ok(());
        }
    };
    let workers = worker_count(common(&cli.command).workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Harvest(a) => commands::harvest(a, workers),
        Command::Regime(a) => commands::regime(a, workers),
        Command::Verify(a) => commands::verify(a, workers),
        Command::Rate(a) => commands::rate(a, workers),
        Command::Tail(a) => commands::tail(a, workers),
        Command::Persistence(a) => commands::persistence(a, workers),
        Command::Trace(a) => commands::trace(a, workers),
        Command::Mellin(a) => commands::mellin(a, workers),
    })
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verify => eprintln!("verification failed"),
                Failure::Usage(m) | Failure::Io(m) => eprintln!("error: {}", m.trim_end()),
            }
            ExitCode::from(f.code())
        }
    }
}

//! Command-line driver for roughkit: rough path construction, RDE and
//! transport/continuity solves, verification reports and the selftest.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod oracles;
pub mod report;
pub mod selftest;
pub mod table;

pub use config::RunConfig;

const SCHEMAS: &str = "\
Input schemas:
  rough path JSON   {\"kind\": \"piecewise_linear\", \"gamma\": g, \"level\": N,
                     \"times\": [..], \"values\": [[x1, .., xd], ..]}
                 or {\"kind\": \"basepoints\", \"gamma\": g, \"times\": [..],
                     \"basepoints\": [tensor, ..]}
  tensor JSON       {\"dim\": d, \"level\": N, \"terms\": [{\"word\": [1, 2], \"coeff\": c}, ..]}
  function JSON     {\"family\": \"polynomial\", \"dim_in\": n,
                     \"components\": [[{\"coeff\": c, \"powers\": [p1, .., pn]}, ..], ..]}
                    {\"family\": \"affine\", \"matrix\": [[..]], \"offset\": [..]}
                    {\"family\": \"constant\", \"dim_in\": n, \"value\": [..]}
                    {\"family\": \"trig\", \"dim_in\": n, \"components\": [[{\"amp\": a,
                      \"freq\": [..], \"phase\": p}, ..], ..]}   (a * sin(freq.x + phase))
                    {\"family\": \"tanh_cutoff\", \"dim\": n, \"scale\": s}
                    {\"family\": \"compose\", \"outer\": f, \"inner\": g}
                    {\"family\": \"sum\", \"terms\": [f, ..]}
  fields JSON       {\"fields\": [f_1, .., f_d]}, one R^n -> R^n map per driving letter
  path CSV          header t,x1,..,xd
  query CSV         header t,x1,..,xn
  particles CSV     header weight,x1,..,xn
CSV files may contain '#' comment lines. Floats are written as shortest
round-trip decimals.

Exit status: 0 success, 1 verification failure, 2 input error, 3 numerical
failure (blow-up, factorization).";

#[derive(Debug, Parser)]
#[command(name = "roughkit", version, about = "Rough paths, RDEs and rough transport/continuity equations")]
#[command(after_long_help = SCHEMAS)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Hölder exponent in (0, 1); overrides the driver's.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Truncation level (at least N_gamma); re-lifts piecewise-linear drivers.
    #[arg(long, global = true)]
    pub level: Option<usize>,
    /// Solver step size; defaults to the driver knots.
    #[arg(long, global = true)]
    pub mesh: Option<f64>,
    /// Seed of the run's random generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Verification report file.
    #[arg(long, global = true)]
    pub report: Option<String>,
    /// Worker threads.
    #[arg(long, global = true, env = "ROUGHKIT_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a rough path from a CSV path or an fBm sample; or inspect a tensor.
    Sig(SigArgs),
    /// Solve an RDE and write the trajectory as CSV.
    Rde(RdeArgs),
    /// Solve the terminal-value transport equation at query points.
    Transport(TransportArgs),
    /// Push a particle measure forward along the RDE flow.
    Continuity(ContinuityArgs),
    /// Graded-order verification with a JSON report.
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
    },
    /// Run the full acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct SigArgs {
    /// Path CSV to lift.
    #[arg(long, conflicts_with_all = ["fbm", "tensor"])]
    pub path: Option<PathBuf>,
    /// Sample a d-dimensional fractional Brownian motion instead.
    #[arg(long, value_name = "D", conflicts_with = "tensor")]
    pub fbm: Option<usize>,
    /// Hurst index of the sample (default gamma + 0.2, at most 0.9).
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Knots of the sample.
    #[arg(long, default_value_t = 257)]
    pub knots: usize,
    /// Write the increment over "s,t" as tensor JSON instead of the path.
    #[arg(long, value_name = "S,T")]
    pub increment: Option<String>,
    /// Check a tensor JSON for the character property and write its group inverse.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    /// Character tolerance for --tensor.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct DriverArgs {
    /// Rough path JSON.
    #[arg(long)]
    pub driver: PathBuf,
    /// Fields JSON.
    #[arg(long)]
    pub fields: PathBuf,
    /// Final time (default: end of the driver).
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RdeArgs {
    #[command(flatten)]
    pub driver: DriverArgs,
    /// Initial state "x1,..,xn".
    #[arg(long)]
    pub x0: String,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[command(flatten)]
    pub driver: DriverArgs,
    /// Terminal condition, function JSON.
    #[arg(long)]
    pub terminal: PathBuf,
    /// Query CSV.
    #[arg(long)]
    pub query: PathBuf,
}

#[derive(Debug, Args)]
pub struct ContinuityArgs {
    #[command(flatten)]
    pub driver: DriverArgs,
    /// Particles CSV of the initial measure.
    #[arg(long)]
    pub mu: PathBuf,
    /// Output times "t1,t2,.." (default: the horizon).
    #[arg(long)]
    pub at: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyTarget {
    /// Graded estimates of the flow-built transport solution on a space grid.
    Transport {
        #[command(flatten)]
        driver: DriverArgs,
        #[arg(long)]
        terminal: PathBuf,
        /// Space grid "lo,hi,k" (k points per axis).
        #[arg(long, default_value = "-1,1,5")]
        space: String,
        /// Cells of the uniform time set.
        #[arg(long, default_value_t = 256)]
        cells: usize,
    },
    /// Graded estimates of the pushforward measure over a test family.
    Continuity {
        #[command(flatten)]
        driver: DriverArgs,
        #[arg(long)]
        mu: PathBuf,
        /// JSON array of test functions (default: cutoff monomials of degree <= 2).
        #[arg(long)]
        phis: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        cells: usize,
    },
    /// Constancy of r -> rho_r(u_r) at off-mesh probe times.
    Duality {
        #[command(flatten)]
        driver: DriverArgs,
        #[arg(long)]
        terminal: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long, default_value_t = 16)]
        probes: usize,
        /// Largest admissible drift.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Run only these criteria, "1,5,9".
    #[arg(long)]
    pub criteria: Option<String>,
}

/// Why a command did not succeed; the exit status follows from the variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Verification(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Verification(m) | Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }

    /// Wraps a library error, naming the operation that raised it.
    pub fn from_core(op: &str, e: roughkit::Error) -> Failure {
        let m = format!("{op}: {e}");
        if e.is_numerical() {
            Failure::Numerical(m)
        } else {
            Failure::Input(m)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("roughkit: {}", f.message());
            f.code()
        }
    }
}

/// Runs a parsed command inside a worker pool of the requested size.
pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match cli.global.threads {
        Some(0) => Err(Failure::Input("cli: --threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Input(format!("cli: thread pool: {e}")))?;
            pool.install(|| commands::dispatch(cli))
        }
        None => commands::dispatch(cli),
    }
}

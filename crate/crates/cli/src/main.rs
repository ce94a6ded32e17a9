//! `slabspike` command-line driver.
//!
//! Exit status: 0 on success, 1 when a `geweke` check fails, 2 for bad
//! input (malformed CSV, unknown column, invalid flags, corrupt traces, I/O),
//! 3 when the sampler hits a numerical degeneracy.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::exit_code;
use slabspike::experiments::{DEFAULT_NUS, SIM_BETA, SIM_K, SIM_N, SIM_SIGMA_STEP};
use slabspike::{Error, Result, SlabFamily, SlabSpec};

#[derive(Parser, Debug)]
#[command(name = "slabspike", version, about = "Spike-and-slab regression with Gaussian and Student-t slabs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sampler on one dataset and write traces and summaries.
    Fit(FitArgs),
    /// Regenerate summaries from stored traces of a run or sweep directory.
    Report(ReportArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Append random noise predictors, or replicate that over many seeds.
    Inject(InjectArgs),
    /// Fit one model per degrees-of-freedom value plus the Gaussian slab.
    Sweep(SweepArgs),
    /// Ridge or lasso coefficients.
    Baseline(BaselineArgs),
    /// Joint-distribution correctness check of the sampler.
    Geweke(GewekeArgs),
}

/// Parameters of the simulation design.
#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// Observations per simulated dataset.
    #[arg(long = "sim-n", default_value_t = SIM_N)]
    pub n: usize,
    /// Candidate predictors per simulated dataset.
    #[arg(long = "sim-k", default_value_t = SIM_K)]
    pub k: usize,
    /// Leading nonzero coefficients; the rest are zero.
    #[arg(long = "sim-beta", value_delimiter = ',', allow_negative_numbers = true,
          default_values_t = SIM_BETA.to_vec())]
    pub beta: Vec<f64>,
    /// Noise standard deviation per scenario step.
    #[arg(long = "sim-sigma-step", default_value_t = SIM_SIGMA_STEP)]
    pub sigma_step: f64,
    /// Seed of the simulated design and errors.
    #[arg(long, default_value_t = 0)]
    pub sim_seed: u64,
}

/// Data source: a CSV file or a simulated scenario.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Headered CSV file.
    #[arg(long, requires = "response", conflicts_with = "scenario", required_unless_present = "scenario")]
    pub input: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated columns that enter every model.
    #[arg(long, value_delimiter = ',')]
    pub always_include: Vec<String>,
    /// Keep the CSV columns in their original units.
    #[arg(long)]
    pub no_standardize: bool,
    /// Use simulation scenario s (noise sd = step * s) instead of a CSV.
    #[arg(long)]
    pub scenario: Option<u32>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyArg {
    Gaussian,
    T,
}

#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    /// Slab distribution.
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    pub family: FamilyArg,
    /// Degrees of freedom of the Student-t slab.
    #[arg(long, default_value_t = 4.0)]
    pub nu: f64,
}

impl FamilyArgs {
    pub fn family(&self) -> SlabFamily {
        match self.family {
            FamilyArg::Gaussian => SlabFamily::Gaussian,
            FamilyArg::T => SlabFamily::StudentT { nu: self.nu },
        }
    }
}

/// Chain schedule, grids and seeding.
#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    /// Total Gibbs sweeps per chain, burn-in included.
    #[arg(long, default_value_t = 22_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2_000)]
    pub burn: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 100)]
    pub grid_q: usize,
    #[arg(long, default_value_t = 100)]
    pub grid_r2: usize,
    /// Base seed; chain c uses seed + c.
    #[arg(long, env = "SLABSPIKE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ScheduleArgs {
    pub fn spec(&self, family: SlabFamily) -> Result<SlabSpec> {
        if self.chains == 0 {
            return Err(Error::InvalidSpec("need at least one chain".into()));
        }
        let spec = SlabSpec {
            family,
            grid_q: self.grid_q,
            grid_r2: self.grid_r2,
            n_iter: self.iters,
            n_burn: self.burn,
            thin: self.thin,
            seed: self.seed,
            ..SlabSpec::default()
        };
        spec.validate()?;
        if spec.n_stored() == 0 {
            return Err(Error::InvalidSpec("the schedule stores no draws".into()));
        }
        Ok(spec)
    }

    pub fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory or sweep directory holding trace files.
    #[arg(long)]
    pub dir: PathBuf,
    /// Where to write the regenerated files; defaults to --dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u32,
    #[command(flatten)]
    pub sim: SimArgs,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of noise predictors to append.
    #[arg(long, default_value_t = 2)]
    pub count: usize,
    /// Seed of the first injection; replicates use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub inject_seed: u64,
    /// With 0, write the augmented data to --out as CSV. Otherwise fit the
    /// original data and this many augmented copies, writing to --out as a
    /// directory.
    #[arg(long, default_value_t = 0)]
    pub replicates: usize,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Degrees of freedom of the Student-t models.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NUS.to_vec())]
    pub nus: Vec<f64>,
    /// Skip the Gaussian-slab model.
    #[arg(long)]
    pub no_gaussian: bool,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("penalty").required(true).args(["ridge", "lasso"])))]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weight of the squared-norm penalty.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Weight of the absolute-value penalty.
    #[arg(long)]
    pub lasso: Option<f64>,
    /// Lasso stops once no coordinate moves more than this.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Coefficient CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationArg {
    None,
    DoubledSigma2Shape,
}

#[derive(Args, Debug)]
pub struct GewekeArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 20)]
    pub grid_q: usize,
    #[arg(long, default_value_t = 20)]
    pub grid_r2: usize,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, env = "SLABSPIKE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Run against a deliberately broken sampler.
    #[arg(long, value_enum, default_value_t = MutationArg::None)]
    pub mutation: MutationArg,
    /// JSON report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Report(a) => commands::report(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Inject(a) => commands::inject(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Baseline(a) => commands::baseline(&a),
        Command::Geweke(a) => commands::geweke(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

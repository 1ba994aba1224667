mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("PIPESL_GIT_HASH"),
    ")"
);

#[derive(Parser, Debug)]
#[command(name = "pipesl", version = VERSION, about = "Plan and simulate pipelined split learning over edge networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a random scenario.
    Generate(GenerateArgs),
    /// Choose cuts, placement and micro-batch for a scenario.
    Optimize(OptimizeArgs),
    /// Replay a plan through the pipeline simulator.
    Simulate(SimulateArgs),
    /// Run every scheme over generated scenarios while varying one parameter.
    Sweep(SweepArgs),
    /// Compare the planner against exhaustive enumeration.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Bcd,
    #[value(name = "rc_op")]
    RcOp,
    #[value(name = "rp_oc")]
    RpOc,
    #[value(name = "no_pipeline")]
    NoPipeline,
}

impl SchemeArg {
    pub fn scheme(self) -> pipesl::bcd::Scheme {
        use pipesl::bcd::Scheme;
        match self {
            SchemeArg::Bcd => Scheme::Bcd,
            SchemeArg::RcOp => Scheme::RcOp,
            SchemeArg::RpOc => Scheme::RpOc,
            SchemeArg::NoPipeline => Scheme::NoPipeline,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Fast,
    Rlt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Servers,
    Bandwidth,
    Compute,
    Memory,
    Topology,
}

/// Knobs shared by every command that plans.
#[derive(Args, Debug, Clone)]
pub struct PlanArgs {
    /// Maximum number of submodels (overrides the scenario).
    #[arg(long = "K", value_name = "K")]
    pub max_submodels: Option<usize>,
    #[arg(long, value_enum, default_value = "fast")]
    pub bound: BoundArg,
    /// Leave the last submodel's compute out of the pipeline interval.
    #[arg(long = "strict-paper-ti")]
    pub strict_ti: bool,
    /// Let one server host several non-adjacent submodels.
    #[arg(long)]
    pub allow_node_reuse: bool,
}

#[derive(Args, Debug)]
pub struct GeneratorArgs {
    /// Number of servers.
    #[arg(long = "servers", short = 'N', default_value_t = 6)]
    pub servers: usize,
    /// Number of clients.
    #[arg(long = "clients", short = 'M', default_value_t = 1)]
    pub clients: usize,
    /// mesh, line, star or tree.
    #[arg(long, default_value = "mesh")]
    pub topology: String,
    /// sub6 or mmwave.
    #[arg(long, default_value = "sub6")]
    pub bandwidth_regime: String,
    /// Mini-batch size.
    #[arg(long, default_value_t = 512)]
    pub minibatch: u32,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Maximum number of submodels.
    #[arg(long = "K", value_name = "K", default_value_t = 5)]
    pub max_submodels: usize,
    /// Link bandwidth in MHz for every link.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Compute speed in FLOP/s for every node.
    #[arg(long)]
    pub compute: Option<f64>,
    /// Memory in GB for every node.
    #[arg(long)]
    pub memory: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    pub scenario: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, value_enum, default_value = "bcd")]
    pub scheme: SchemeArg,
    /// Seed for the random schemes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the chosen plan here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Write the relaxation at the chosen micro-batch as plain text.
    #[arg(long, value_name = "PATH")]
    pub lp_dump: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    pub plan: PathBuf,
    /// Coefficient of variation of compute speeds and link rates.
    #[arg(long)]
    pub cv: Option<f64>,
    /// Number of perturbed runs.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// First seed of the perturbed runs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Give the last micro-batch only the leftover samples.
    #[arg(long)]
    pub ragged_last: bool,
    /// Write the event log of the first run as CSV.
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values or an inclusive range `a..b` or `a..b:step`.
    /// Bandwidth in MHz, memory in GB, compute in FLOP/s.
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value_t = 30)]
    pub trials: u64,
    /// Comma-separated schemes.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "bcd,rc_op,rp_oc,no_pipeline"
    )]
    pub schemes: Vec<SchemeArg>,
    /// Seed of the first trial.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    pub scenario: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Compare at this micro-batch only.
    #[arg(long)]
    pub b: Option<u32>,
    /// Refuse enumerations larger than this many evaluations.
    #[arg(long, default_value_t = pipesl::oracle::DEFAULT_MAX_EVALUATIONS)]
    pub limit: u128,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Oracle(a) => commands::oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

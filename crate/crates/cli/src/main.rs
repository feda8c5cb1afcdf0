use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use taylor_icp::{Branch, ErrorKind};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "taylor-icp",
    version,
    about = "Non-rigid point set registration with structured Taylor maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register a moving cloud onto a fixed one.
    Register(RegisterArgs),
    /// Apply a random synthetic deformation to a cloud.
    Deform(DeformArgs),
    /// Apply a saved map and print the nearest-neighbor RMSE.
    Eval(EvalArgs),
    /// Time registration over a range of cloud sizes.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    #[arg(long)]
    pub fixed: PathBuf,
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long, value_enum, default_value_t = BranchArg::Taylor)]
    pub branch: BranchArg,
    #[arg(long, default_value_t = 4)]
    pub order_cap: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub rmse_threshold: f64,
    #[arg(long, default_value_t = 30)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_map: PathBuf,
    #[arg(long)]
    pub out_trace: PathBuf,
    /// JSON run report; defaults to the trace path with a .json extension.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum BranchArg {
    Taylor,
    Projective,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::Taylor => Branch::Taylor,
            BranchArg::Projective => Branch::Projective,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Taylor,
    Bump,
}

#[derive(Args, Debug)]
pub struct DeformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Warp order (taylor) or baseline order (bump).
    #[arg(long)]
    pub order: Option<usize>,
    /// Coefficient range; 0.3 for taylor and 0.07 for bump when omitted.
    #[arg(long)]
    pub coeff_range: Option<f64>,
    /// Rescale the warp so its post-rigid RMSD on the normalized input hits
    /// this value.
    #[arg(long)]
    pub target_rmsd: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_truth: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub fixed: PathBuf,
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long)]
    pub map: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer iterations per run; every run uses all of them.
    #[arg(long, default_value_t = 30)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub target_rmsd: f64,
    /// Worker threads for running trials.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = match cli.command {
        Command::Register(a) => commands::register(&a),
        Command::Deform(a) => commands::deform(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

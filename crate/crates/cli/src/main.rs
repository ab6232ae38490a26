//! `scencert` command-line front end.
//!
//! Exit codes: 0 success, 1 coverage below its acceptance threshold,
//! 2 invalid arguments or parameters.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the directory that relative `--out` paths
/// are resolved against.
pub const OUT_DIR_ENV: &str = "SCENCERT_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "scencert", version, about = "Risk certificates for multi-criteria scenario decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Region certificate and joint-risk bound for an observed complexity.
    Certify(CertifyArgs),
    /// CSV membership grid of a two-criterion region.
    RegionGrid(RegionGridArgs),
    /// A-priori joint-risk bounds over a range of m.
    Apriori(AprioriArgs),
    /// Diagonal and independent joint bounds for the reference configurations.
    Table1(Table1Args),
    /// Smallest dataset size meeting a joint-risk target.
    Size(SizeArgs),
    /// Monte Carlo coverage experiment on a toy problem.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct Dims {
    /// Scenarios per criterion, comma separated; a single value is
    /// broadcast to `--m` criteria.
    #[arg(long)]
    n: String,
    /// Number of criteria, for broadcasting scalar multi-indices.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output file; relative paths are resolved against $SCENCERT_OUT_DIR.
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Uniform,
    Axial,
    Diagonal,
    /// Product of per-criterion intervals with β_i = β/m.
    Independent,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ChoiceArg {
    UpperOnly,
    ThreeBand,
}

impl From<ChoiceArg> for scencert::IntervalChoice {
    fn from(c: ChoiceArg) -> Self {
        match c {
            ChoiceArg::UpperOnly => Self::UpperOnlyHN,
            ChoiceArg::ThreeBand => Self::ThreeBandH4N,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    dims: Dims,
    /// Observed complexity s*.
    #[arg(long)]
    k: String,
    /// Upper index H of the allocation (defaults to N).
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value = "diagonal")]
    scheme: SchemeArg,
    /// Interval construction for the independent scheme.
    #[arg(long, value_enum, default_value = "upper-only")]
    choice: ChoiceArg,
    /// Grid resolution for the numerical joint bound of uniform and axial
    /// allocations.
    #[arg(long, default_value_t = 400)]
    resolution: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct RegionGridArgs {
    #[command(flatten)]
    dims: Dims,
    #[arg(long)]
    k: String,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value = "diagonal")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 400)]
    resolution: usize,
    /// Leave out the `member_box` column.
    #[arg(long)]
    no_box: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct AprioriArgs {
    /// Smallest dataset size N̲ (every criterion gets N̲ scenarios).
    #[arg(long)]
    n_lower: usize,
    #[arg(long)]
    beta: f64,
    /// Complexity cap K*.
    #[arg(long)]
    kstar: usize,
    /// Values of m: `a..b` (inclusive), `a..b:step`, or a comma list.
    #[arg(long, default_value = "1..100")]
    m_range: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct Table1Args {
    #[arg(long, default_value_t = 1e-7)]
    beta: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SizeArgs {
    /// Number of criteria (finite-m bound).
    #[arg(long, conflicts_with = "uniform", required_unless_present = "uniform")]
    m: Option<usize>,
    /// Use the bound that holds for every m.
    #[arg(long)]
    uniform: bool,
    #[arg(long)]
    kstar: usize,
    #[arg(long)]
    beta: f64,
    /// Target joint risk ε in (0, 1).
    #[arg(long)]
    eps: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProblemArg {
    MaxOfSamples,
    RobustLp2d,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CertArg {
    Box,
    Diagonal,
    JointDiagonal,
    JointIndependent,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[command(flatten)]
    dims: Dims,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "diagonal")]
    certificate: CertArg,
    /// Quasi-Monte Carlo points for the LP risk oracle.
    #[arg(long)]
    qmc_points: Option<usize>,
    /// Write the first trial's datasets as CSV to this path.
    #[arg(long)]
    dump_datasets: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

fn main() {
    let code = run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}

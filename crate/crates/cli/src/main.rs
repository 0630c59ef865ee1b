use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use overlap_core::{BandwidthRule, KernelSpec, Measure, MlVarianceMode, Scenario, SupportPolicy};

mod estimate;
mod input;
mod kernels;
mod simulate;

/// Version of the JSON documents written by `estimate` and `simulate`.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input, unwritable output. Exit 2.
    Input(String),
    /// A density or variance degenerated numerically. Exit 3.
    Numerical(String),
}

impl From<overlap_core::Error> for CliError {
    fn from(e: overlap_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

/// Writes to stdout; a closed pipe (`overlap ... | head`) is not an error.
pub fn emit(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Input(format!("cannot write to stdout: {e}")))
        }
        _ => Ok(()),
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "overlap", version, about = "Kernel estimates of Pianka and MacArthur-Levins overlap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate both overlap measures from two samples.
    Estimate(EstimateArgs),
    /// Run a seeded Monte Carlo study and write plot data.
    Simulate(SimulateArgs),
    /// List the built-in kernels and their moments.
    Kernels {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeasureChoice {
    Pianka,
    MacarthurLevins,
    Both,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Single-column CSV with the first sample.
    #[arg(long, requires = "y", conflicts_with = "data")]
    pub x: Option<PathBuf>,
    /// Single-column CSV with the second sample.
    #[arg(long, requires = "x")]
    pub y: Option<PathBuf>,
    /// Two-column `value,group` CSV holding both samples.
    #[arg(long, required_unless_present = "x")]
    pub data: Option<PathBuf>,
    /// Group labels to compare, in order (default: the two labels in the file).
    #[arg(long, value_delimiter = ',', requires = "data")]
    pub groups: Option<Vec<String>>,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: KernelSpec,
    /// sim | app | power:ALPHA | scaled-log:C,P | fixed:H
    #[arg(long, default_value = "app")]
    pub bandwidth: BandwidthRule,
    /// auto | LO,HI | quantile:Q
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub support: SupportPolicy,
    /// Odd number of grid points for the integrals.
    #[arg(long, default_value_t = overlap_core::kde::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Closed form used for the MacArthur-Levins variance.
    #[arg(long, default_value = "rederived")]
    pub ml_variance: MlVarianceMode,
    /// Measures shown in csv/text output; json always carries both.
    #[arg(long, value_enum, default_value_t = MeasureChoice::Both)]
    pub measure: MeasureChoice,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// case_I | case_II
    #[arg(long)]
    pub scenario: Scenario,
    /// Sample size per group.
    #[arg(long)]
    pub n: usize,
    /// Number of replications.
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: KernelSpec,
    #[arg(long, default_value = "sim")]
    pub bandwidth: BandwidthRule,
    #[arg(long, default_value_t = overlap_core::kde::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Measure whose statistic goes into qq.csv and histogram.csv.
    #[arg(long, default_value = "pianka")]
    pub measure: Measure,
    #[arg(long, default_value = "rederived")]
    pub ml_variance: MlVarianceMode,
    /// Nominal level of the intervals counted for coverage.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => estimate::run(&args),
        Command::Simulate(args) => simulate::run(&args),
        Command::Kernels { format } => kernels::run(format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Input(m) => ("error", m),
                CliError::Numerical(m) => ("numerical error", m),
            };
            eprintln!("{kind}: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}

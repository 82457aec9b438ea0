//! Command-line front end for qvsec: solve, Q-V sweeps, HVDC scans,
//! clustering and the SVG/CSV reports.
//!
//! Exit codes: 0 success, 1 I/O or other runtime failure, 2 configuration
//! or usage error, 3 case-file parse or validation error, 4 base case did
//! not converge.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod report;

pub use config::{Overrides, RunConfig, SchemeChoice};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Parse(String),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::NonConvergence(m) => write!(f, "not converged: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "qvsec", version, about = "Q-V voltage-security studies with VSC-HVDC upgrade scenarios")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Case file: MATPOWER-style `.m` or native `.toml`.
    #[arg(long, global = true)]
    pub case: Option<PathBuf>,
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Clustering seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of clusters.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub scheme: Option<SchemeChoice>,
    /// Minimum base kV of the study buses.
    #[arg(long = "kv-floor", global = true)]
    pub kv_floor: Option<f64>,
    #[arg(long = "v-step", global = true)]
    pub v_step: Option<f64>,
    #[arg(long = "v-floor", global = true)]
    pub v_floor: Option<f64>,
    /// Cluster both schemes together.
    #[arg(long, global = true)]
    pub joint: bool,
    /// Run batches on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the base power flow and write voltage and generator tables.
    Solve,
    /// Q-V curves at the selected buses (all study buses by default).
    Qv {
        #[arg(long = "bus")]
        buses: Vec<u32>,
    },
    /// Replace each selected branch by an HVDC link under each scheme.
    Scan,
    /// Cluster a scan's zone deltas and draw the heatmaps.
    Cluster {
        /// Scan CSV; defaults to `<out>/scan/scan.csv`.
        #[arg(long)]
        scan: Option<PathBuf>,
    },
    /// Extractable Q against nose voltage, one point per bus.
    Scatter {
        #[arg(long = "bus")]
        buses: Vec<u32>,
    },
    /// solve, qv, scan, cluster and scatter in one go, plus a manifest.
    Pipeline,
    /// Rewrite a case file in the native TOML format.
    Convert {
        /// Destination; defaults to standard output.
        #[arg(long)]
        to: Option<PathBuf>,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            case: self.case.clone(),
            out: self.out.clone(),
            seed: self.seed,
            k: self.k,
            scheme: self.scheme,
            kv_floor: self.kv_floor,
            v_step: self.v_step,
            v_floor: self.v_floor,
            joint: self.joint,
            sequential: self.sequential,
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides())?;
    let ctx = commands::Context::new(cfg)?;
    match &cli.command {
        Command::Solve => commands::solve(&ctx).map(|_| ()),
        Command::Qv { buses } => commands::qv(&ctx, buses).map(|_| ()),
        Command::Scan => commands::scan(&ctx).map(|_| ()),
        Command::Cluster { scan } => {
            let path = scan.clone().unwrap_or_else(|| ctx.dir("scan").join("scan.csv"));
            commands::cluster(&ctx, &path).map(|_| ())
        }
        Command::Scatter { buses } => commands::scatter(&ctx, buses).map(|_| ()),
        Command::Pipeline => commands::pipeline(&ctx),
        Command::Convert { to } => commands::convert(&ctx, to.as_deref()),
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qvsec: {e}");
            e.exit_code()
        }
    }
}

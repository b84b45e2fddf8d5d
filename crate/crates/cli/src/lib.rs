//! The `cfanet` command-line tool: mosaic simulation, demosaicing, training,
//! evaluation, pattern design, and SVEC HDR simulation/reconstruction.
//!
//! Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on bad usage or
//! configuration.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_demosaic, cmd_design_pattern, cmd_evaluate, cmd_mosaic, cmd_svec_reconstruct,
    cmd_svec_simulate, cmd_train, Context,
};
pub use config::{
    DemosaicArgs, EvaluateArgs, MosaicArgs, SvecReconstructArgs, SvecSimulateArgs, TrainArgs,
    CONFIG_ECHO,
};

#[derive(Debug, Parser)]
#[command(name = "cfanet", version, about = "CFA simulation and CNN demosaicing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for initialization, patch sampling, noise, and batch order.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 is fully serial; 0 or unset uses all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with top-level `seed`/`threads` and one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an RGB image through a color filter array.
    Mosaic(MosaicArgs),
    /// Reconstruct an RGB image from a mosaic file or an RGB image.
    Demosaic(DemosaicArgs),
    /// Train DMCNN or DMCNN-VD on a fixed pattern.
    Train(TrainArgs),
    /// Score a directory of images.
    Evaluate(EvaluateArgs),
    /// Jointly learn a pattern and its DMCNN-VD demosaicer.
    DesignPattern(TrainArgs),
    /// Simulate an SVEC capture of a radiance map.
    SvecSimulate(SvecSimulateArgs),
    /// Reconstruct radiance from an SVEC mosaic.
    SvecReconstruct(SvecReconstructArgs),
}

impl Command {
    pub fn section(&self) -> &'static str {
        match self {
            Command::Mosaic(_) => "mosaic",
            Command::Demosaic(_) => "demosaic",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::DesignPattern(_) => "design-pattern",
            Command::SvecSimulate(_) => "svec-simulate",
            Command::SvecReconstruct(_) => "svec-reconstruct",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 2).
    Usage(String),
    /// Failure while running (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cfanet::Error> for CliError {
    fn from(e: cfanet::Error) -> Self {
        use cfanet::Error as E;
        match e {
            E::Config(_)
            | E::UnknownPattern(_)
            | E::InvalidPattern(_)
            | E::DegeneratePattern(_)
            | E::LayerMismatch { .. }
            | E::Shape { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let file = config::load_config(cli.global.config.as_deref())?;
    let ctx = Context {
        seed: cli
            .global
            .seed
            .or(config::top_level(&file, "seed")?)
            .unwrap_or(0),
        threads: cli
            .global
            .threads
            .or(config::top_level(&file, "threads")?)
            .unwrap_or(0),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let section = cli.command.section();
    pool.install(|| match &cli.command {
        Command::Mosaic(a) => cmd_mosaic(&ctx, &config::merge(a, &file, section)?),
        Command::Demosaic(a) => cmd_demosaic(&ctx, &config::merge(a, &file, section)?),
        Command::Train(a) => cmd_train(&ctx, &config::merge(a, &file, section)?),
        Command::Evaluate(a) => cmd_evaluate(&ctx, &config::merge(a, &file, section)?),
        Command::DesignPattern(a) => cmd_design_pattern(&ctx, &config::merge(a, &file, section)?),
        Command::SvecSimulate(a) => cmd_svec_simulate(&ctx, &config::merge(a, &file, section)?),
        Command::SvecReconstruct(a) => {
            cmd_svec_reconstruct(&ctx, &config::merge(a, &file, section)?)
        }
    })
}

/// Parses `args` (including the program name), runs the command, reports
/// errors on standard error, and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("see `cfanet {} --help`", cli.command.section());
            }
            e.exit_code()
        }
    }
}

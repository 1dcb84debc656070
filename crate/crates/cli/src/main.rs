//! `fibo`: mask generation, statistics, bound checks and toy forward passes
//! for Fibonacci-dilated sparse attention.
//!
//! Exit status: 0 ok, 2 usage error, 3 bound violated, 4 I/O error.

mod commands;
mod config;
mod failure;
mod gradcheck;
mod masks;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommandKind, FamilyArgs, Format, GeometryArgs, OutputArgs, RunConfig, Table};
use failure::Failure;
use output::paint;

#[derive(Parser)]
#[command(name = "fibo", version, about = "Fibonacci-dilated sparse attention masks and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write per-layer, per-head masks (PBM, CSV or JSON) and a manifest
    Mask(MaskArgs),
    /// Pruning ratio, per-head pair counts and head overlap
    Stats(StatsArgs),
    /// Check measured dot products against the analytic bounds (JSON)
    Bounds(BoundsArgs),
    /// Seeded toy attention block: output checksum, optional gradient check
    Forward(ForwardArgs),
    /// Head-diversity summary over seeded random inputs (JSON)
    Diversity(DiversityArgs),
    /// Re-run the invocation recorded in a manifest
    Replay(ReplayArgs),
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    geo: GeometryArgs,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, value_enum, default_value_t = Format::Pbm)]
    format: Format,
    #[arg(long, required = true)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    geo: GeometryArgs,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Print a reference table instead of the configured mask
    #[arg(long, value_enum)]
    table: Option<Table>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    geo: GeometryArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model width [default: 64 * heads]
    #[arg(long)]
    d_model: Option<usize>,
    /// Comma-separated patch counts, each with the default window rule
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<usize>,
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    geo: GeometryArgs,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    d_model: Option<usize>,
    /// Compare analytic gradients with central differences (small sizes only)
    #[arg(long)]
    grad_check: bool,
    #[arg(long)]
    zero_input: bool,
}

#[derive(Args)]
struct DiversityArgs {
    #[command(flatten)]
    geo: GeometryArgs,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long, default_value_t = 16)]
    samples: usize,
    /// Give every head the same weights and mask
    #[arg(long)]
    identical_heads: bool,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write to this directory instead of the recorded one
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(command: Command) -> Result<RunConfig, Failure> {
    let cfg = match command {
        Command::Mask(a) => {
            RunConfig::new(CommandKind::Mask, &a.geo, a.format, Some(a.out))?.with_family(&a.family)?
        }
        Command::Stats(a) => {
            let mut cfg = RunConfig::new(CommandKind::Stats, &a.geo, a.output.format.unwrap_or(Format::Pbm), a.output.out)?
                .with_family(&a.family)?;
            cfg.table = a.table;
            cfg
        }
        Command::Bounds(a) => {
            let mut cfg = RunConfig::new(CommandKind::Bounds, &a.geo, Format::Json, a.out)?;
            cfg.d_model = a.d_model.unwrap_or(cfg.d_model);
            cfg.sweep = a.sweep;
            cfg
        }
        Command::Forward(a) => {
            let mut cfg = RunConfig::new(CommandKind::Forward, &a.geo, a.output.format.unwrap_or(Format::Pbm), a.output.out)?
                .with_family(&a.family)?;
            cfg.d_model = a.d_model.unwrap_or(cfg.d_model);
            cfg.grad_check = a.grad_check;
            cfg.zero_input = a.zero_input;
            cfg
        }
        Command::Diversity(a) => {
            let mut cfg = RunConfig::new(CommandKind::Diversity, &a.geo, Format::Json, a.out)?.with_family(&a.family)?;
            cfg.d_model = a.d_model.unwrap_or(cfg.d_model);
            cfg.samples = a.samples;
            cfg.identical_heads = a.identical_heads;
            cfg
        }
        Command::Replay(a) => {
            let text = fs::read_to_string(&a.manifest)
                .map_err(|e| Failure::io(format!("cannot read {}", a.manifest.display()), e))?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("bad manifest {}: {e}", a.manifest.display())))?;
            if a.out.is_some() {
                cfg.out = a.out;
            }
            cfg
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &RunConfig) -> Result<(), Failure> {
    match cfg.command {
        CommandKind::Mask => commands::mask(cfg),
        CommandKind::Stats => commands::stats(cfg),
        CommandKind::Bounds => commands::bounds(cfg),
        CommandKind::Forward => commands::forward(cfg),
        CommandKind::Diversity => commands::diversity(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match resolve(cli.command).and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let label = match e {
                Failure::Violation(_) => "violation:",
                _ => "error:",
            };
            eprintln!("{} {e}", paint(label, "31"));
            e.exit_code()
        }
    }
}

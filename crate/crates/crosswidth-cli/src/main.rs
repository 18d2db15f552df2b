use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use crosswidth::cli::{self, CliError, Command, Flags};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Analyze,
    Bs,
    Pseudo,
    Widths,
    Oracle,
    Compare,
    Stphase,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Analyze => Command::Analyze,
            Sub::Bs => Command::Bs,
            Sub::Pseudo => Command::Pseudo,
            Sub::Widths => Command::Widths,
            Sub::Oracle => Command::Oracle,
            Sub::Compare => Command::Compare,
            Sub::Stphase => Command::Stphase,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    OneSwitch,
    Full,
}

/// Semiclassical resonance widths for 2x2 crossing systems.
#[derive(Debug, Parser)]
#[command(name = "crosswidth", version)]
struct Args {
    /// Subcommand to run.
    command: Sub,
    /// TOML config file.
    config: PathBuf,
    /// Single step size h (overrides the config sweep).
    #[arg(long)]
    h: Option<f64>,
    /// Comma-separated, strictly decreasing step sizes.
    #[arg(long = "h-list")]
    h_list: Option<String>,
    /// Index into the Bohr-Sommerfeld grid (default: energy nearest e0).
    #[arg(long = "seed-index")]
    seed_index: Option<usize>,
    /// Complex scaling angle.
    #[arg(long)]
    theta: Option<f64>,
    /// Scaling radius of the outer integration boundary.
    #[arg(long = "X")]
    x_max: Option<f64>,
    /// Width coefficient variant.
    #[arg(long, value_enum, default_value = "one-switch")]
    variant: Variant,
    /// Stationary point order for `stphase`.
    #[arg(long)]
    m: Option<usize>,
    /// Phase expression for `stphase`.
    #[arg(long)]
    phi: Option<String>,
    /// Amplitude expression for `stphase`.
    #[arg(long)]
    sigma: Option<String>,
    /// Normalization constant of the stationary-phase coefficient.
    #[arg(long)]
    calib: Option<f64>,
    /// Write the main output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the CSV table of `compare` here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn write(path: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: Args) -> Result<i32, CliError> {
    let h_list = args
        .h_list
        .as_deref()
        .map(cli::parse_h_list)
        .transpose()
        .map_err(CliError::Usage)?;
    let flags = Flags {
        h: args.h,
        h_list,
        seed_index: args.seed_index,
        theta: args.theta,
        x_max: args.x_max,
        full: matches!(args.variant, Variant::Full),
        m: args.m,
        calib: args.calib,
        phi: args.phi,
        sigma: args.sigma,
    };
    let cfg = cli::load_config(&args.config)?;
    let out = cli::run_subcommand(args.command.into(), &cfg, &flags);
    write(&args.out, &out.text)?;
    if let (Some(table), Some(path)) = (&out.table, &args.csv) {
        write(&Some(path.clone()), table)?;
    }
    Ok(out.code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("crosswidth: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

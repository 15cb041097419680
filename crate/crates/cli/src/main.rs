use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use atomphase_cli::commands::{cmd_curves, cmd_fit, cmd_simulate};
use atomphase_cli::{parse_config, CliError, RunConfig};

/// Single-atom phase shift and extinction in a Mach-Zehnder interferometer:
/// theory curves, measurement-sequence simulation, and spectrum fitting.
#[derive(Parser)]
#[command(name = "atomphase", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (`key = value` lines); defaults used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the generated files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Enable probe-linewidth convolution (750 kHz FWHM by default).
    #[arg(long)]
    convolve: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write fig2.csv (phase vs focusing strength) and fig3.csv
    /// (phase and transmission vs detuning).
    Curves(CommonArgs),
    /// Simulate the measurement sequence and write records.csv.
    Simulate(CommonArgs),
    /// Fit a records file; writes fit_report.txt and phase_pred.csv.
    Fit {
        /// Path to a records.csv produced by `simulate` (or compatible).
        records: PathBuf,
        #[command(flatten)]
        args: CommonArgs,
    },
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn prepare_out_dir(args: &CommonArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out)
        .map_err(CliError::io(format!("creating {}", args.out.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Curves(args) => {
            let cfg = load_config(&args)?;
            prepare_out_dir(&args)?;
            cmd_curves(&cfg, &args.out, args.convolve)
        }
        Command::Simulate(args) => {
            let cfg = load_config(&args)?;
            prepare_out_dir(&args)?;
            cmd_simulate(&cfg, &args.out)
        }
        Command::Fit { records, args } => {
            let cfg = load_config(&args)?;
            prepare_out_dir(&args)?;
            cmd_fit(&records, &cfg, &args.out, args.convolve).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

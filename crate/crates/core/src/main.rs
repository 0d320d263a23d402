use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oposim::workbench::{self, Command, Overrides};

#[derive(Parser)]
#[command(name = "oposim", version, about = "Quantum noise workbench for the above-threshold OPO")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Linearized spectra over a sigma grid.
    LinearScan(Common),
    /// First-order and nonlinear stochastic ensembles against the linear model.
    StochasticCompare(Common),
    /// Detected noise versus analysis-cavity detuning.
    CavitySweep(Common),
    /// Check a configuration without computing anything.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    traj: Option<usize>,
    #[arg(long, value_name = "X")]
    dt: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::LinearScan(a) => (Command::LinearScan, a),
        Cmd::StochasticCompare(a) => (Command::StochasticCompare, a),
        Cmd::CavitySweep(a) => (Command::CavitySweep, a),
        Cmd::Validate(a) => (Command::Validate, a),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let ov = Overrides {
        out: args.out,
        seed: args.seed,
        traj: args.traj,
        dt: args.dt,
    };
    match workbench::run(command, &text, &ov) {
        Ok(report) => {
            match &report.out_dir {
                Some(dir) => {
                    for f in &report.files {
                        println!("{}", dir.join(f).display());
                    }
                }
                None => println!("{}: ok", args.config.display()),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

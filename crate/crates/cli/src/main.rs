use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecc_sim::{cmd_ablate, cmd_run, cmd_sweep_delta, resolve_out_dir, CliError, ExperimentConfig, OUT_ENV};

#[derive(Parser)]
#[command(name = "ecc-sim", version, about = "Edge-cloud collaborative spiking network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override `train.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `output.dir`, then $ECC_SIM_OUT, then ./ecc-out)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Setup, then Execution and Update for every task
    Run(Common),
    /// Accuracy/cost frontier over `filter.deltas`
    SweepDelta(Common),
    /// Task-1 accuracy with logit distillation and feature alignment toggled
    Ablate(Common),
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (args, which) = match cli.command {
        Command::Run(a) => (a, "run"),
        Command::SweepDelta(a) => (a, "sweep-delta"),
        Command::Ablate(a) => (a, "ablate"),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    let out = resolve_out_dir(args.out, &cfg);
    log::info!("{which}: writing reports to {} ({OUT_ENV} sets the default)", out.display());
    match which {
        "run" => {
            let w = cmd_run(&cfg, &out)?;
            println!("wrote {} files to {}", w.files.len() + 1, out.display());
        }
        "sweep-delta" => {
            let points = cmd_sweep_delta(&cfg, &out)?;
            println!("wrote {} frontier points to {}", points.len(), out.join("frontier.csv").display());
        }
        _ => {
            let rows = cmd_ablate(&cfg, &out)?;
            println!("wrote {} ablation rows to {}", rows.len(), out.join("ablation.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ecc-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

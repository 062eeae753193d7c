use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtube::experiments::{execute, write_outputs, RunConfig, Scenario};

#[derive(Parser)]
#[command(name = "qtube", version, about = "Wave-packet propagation with Bohmian trajectory and probability-tube analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Barrier tunneling preset.
    Tunnel(RunArgs),
    /// Five-slit grating preset.
    Grating(RunArgs),
    /// Fully user-specified run; requires --config.
    Custom(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file overriding the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of trajectories in the main ensemble.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Also write every snapshot to snapshots.csv.
    #[arg(long)]
    export_snapshots: bool,
}

fn load(scenario: Scenario, args: &RunArgs) -> qtube::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path, Some(scenario))?,
        None => RunConfig::preset(scenario)
            .ok_or_else(|| qtube::Error::Config("custom runs need --config".into()))?,
    };
    if let Some(n) = args.trajectories {
        cfg.trajectories.count = n;
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    cfg.output.export_snapshots |= args.export_snapshots;
    cfg.validate()?;
    Ok(cfg)
}

fn run(scenario: Scenario, args: &RunArgs) -> qtube::Result<()> {
    let cfg = load(scenario, args)?;
    let output = execute(&cfg)?;
    let files = write_outputs(&output, &cfg.output.dir, cfg.output.export_snapshots)?;
    let d = &output.report.diagnostics;
    println!(
        "{} snapshots, norm drift {:.2e}, energy drift {:.2e}",
        d.snapshots, d.max_norm_drift, d.max_relative_energy_drift
    );
    println!("wrote {}", files.report.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, args) = match &cli.command {
        Command::Tunnel(a) => (Scenario::Tunnel, a),
        Command::Grating(a) => (Scenario::Grating, a),
        Command::Custom(a) => (Scenario::Custom, a),
    };
    match run(scenario, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

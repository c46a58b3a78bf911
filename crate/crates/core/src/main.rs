use std::path::PathBuf;
use std::process::ExitCode;

use blackout::cli::{run, Mode, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Blackout intersection simulator.
///
/// Values come from the built-in defaults, then the `--config` file, then
/// the command-line flags, each overriding the previous.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    mode: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blackout reconstruction and match report.
    Replay(Flags),
    /// Fixed-time signal run compared with blackout operation.
    Signalized(Flags),
    /// Penetration sweep of robot vehicles.
    Mixed(Flags),
    /// Train the shared Stop/Go policy.
    Train(Flags),
    /// Schema and arrival-stability checks.
    Validate(Flags),
    /// Directional demand and turning counts.
    Stats(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario CSV or bundled sample name (WGG-N, WGG-AN, WGM-N, WGM-AN).
    #[arg(long)]
    scenario: Option<String>,
    /// WGG, WGM or an intersection description file.
    #[arg(long)]
    intersection: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    penetration: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long = "timestep-tol")]
    timestep_tol: Option<f64>,
    /// Run independent simulations in parallel.
    #[arg(long)]
    sweep: bool,
    /// Write trajectory.csv.
    #[arg(long)]
    trajectory: bool,
    /// Training iterations.
    #[arg(long)]
    iterations: Option<usize>,
}

fn resolve(mode: Mode, f: Flags) -> Result<RunConfig, String> {
    let mut cfg = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::from_toml(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    cfg.mode = mode;
    if f.scenario.is_some() {
        cfg.scenario = f.scenario;
        cfg.synthetic = None;
    }
    if f.intersection.is_some() {
        cfg.intersection = f.intersection;
    }
    if f.duration.is_some() {
        cfg.duration = f.duration;
    }
    if f.policy.is_some() {
        cfg.policy = f.policy;
    }
    cfg.seed = f.seed.unwrap_or(cfg.seed);
    cfg.dt = f.dt.unwrap_or(cfg.dt);
    cfg.out = f.out.unwrap_or(cfg.out);
    cfg.penetration = f.penetration.unwrap_or(cfg.penetration);
    cfg.scale = f.scale.unwrap_or(cfg.scale);
    cfg.timestep_tol = f.timestep_tol.unwrap_or(cfg.timestep_tol);
    cfg.sweep |= f.sweep;
    cfg.trajectory |= f.trajectory;
    cfg.train.iterations = f.iterations.unwrap_or(cfg.train.iterations);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, flags) = match cli.mode {
        Command::Replay(f) => (Mode::Replay, f),
        Command::Signalized(f) => (Mode::Signalized, f),
        Command::Mixed(f) => (Mode::Mixed, f),
        Command::Train(f) => (Mode::Train, f),
        Command::Validate(f) => (Mode::Validate, f),
        Command::Stats(f) => (Mode::Stats, f),
    };
    let cfg = match resolve(mode, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            print!("{}", report.text);
            println!("wrote {} to {}", report.files.join(", "), cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `qinfluence`: configuration-driven spin-boson experiments with CSV output.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "qinfluence", version, about = "Initial-state influence in the spin-boson model")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// TOML experiment file; the built-in default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Size of the worker pool; all cores when omitted.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    emit_default_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Discretise the spectral density into bath.csv.
    Discretize,
    /// Propagate the basis states (and extras) into trajectories/.
    Simulate,
    /// Reconstruct the map from trajectories/ and classify its asymptotics.
    Analyze,
    /// Closed-form and integrated TCL2 dynamics.
    Tcl2,
    /// Test the distinguishability bound on stored and random pairs.
    BoundCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Discretize => "discretize",
            Command::Simulate => "simulate",
            Command::Analyze => "analyze",
            Command::Tcl2 => "tcl2",
            Command::BoundCheck => "bound-check",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default_config(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli, cmd: Command, m: &mut RunManifest, out: &mut PathBuf) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    *out = cfg.output.dir.clone();
    m.set_config(&cfg);
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let out: &Path = out;
    std::fs::create_dir_all(out)?;
    let resolved = format!("config-{}.toml", cmd.name());
    std::fs::write(out.join(&resolved), cfg.to_toml())?;
    m.output(Path::new(&resolved));
    match cmd {
        Command::Discretize => commands::discretize(&cfg, out, m),
        Command::Simulate => commands::simulate(&cfg, out, m),
        Command::Analyze => commands::analyze(&cfg, out, m),
        Command::Tcl2 => commands::tcl2(&cfg, out, m),
        Command::BoundCheck => commands::bound_check(&cfg, out, m),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.emit_default_config {
        print!("{}", ExperimentConfig::default_config().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        eprintln!("error: no subcommand given; expected one of discretize, simulate, analyze, tcl2, bound-check");
        return ExitCode::from(2);
    };
    let mut manifest = RunManifest::start(cmd.name());
    let mut out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = run(&cli, cmd, &mut manifest, &mut out);
    let code = match &result {
        Ok(()) => {
            manifest.status = "ok".into();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            manifest.status = e.kind().into();
            manifest.error = Some(e.to_string());
            e.exit_code()
        }
    };
    if let Err(e) = manifest.write(&out) {
        eprintln!("error: cannot write the run manifest: {e}");
        if code == 0 {
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code as u8)
}

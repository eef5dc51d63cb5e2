//! The `hk` binary runs the propagation experiments described by a flat-JSON
//! config and writes CSV error tables (plus wavefunction dumps for the
//! propagation subcommands).
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hk_core::driver::{
    run_compare, run_converge, run_identity, run_propagate, run_reference, ErrorTable, RunConfig,
};
use hk_core::fio_apply::WaveFunction;
use hk_core::HkError;

#[derive(Parser)]
#[command(
    name = "hk",
    version,
    about = "Semiclassical wavepacket propagation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat-JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables (overrides the config's `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for bundle evolution and synthesis.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analysis followed by synthesis with the identity flow; reports the
    /// reconstruction error.
    Identity(RunArgs),
    /// Propagate with the configured method and compare to the reference.
    Propagate(RunArgs),
    /// ε-sweep of the configured method with a fitted error slope.
    Converge(RunArgs),
    /// Side-by-side hk/fga/tga rows at shared (ε, t).
    Compare(RunArgs),
    /// Reference solver run.
    Reference(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Identity(a)
            | Command::Propagate(a)
            | Command::Converge(a)
            | Command::Compare(a)
            | Command::Reference(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Identity(_) => "identity",
            Command::Propagate(_) => "propagate",
            Command::Converge(_) => "converge",
            Command::Compare(_) => "compare",
            Command::Reference(_) => "reference",
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HkError::ConfigError(_) | HkError::UnknownModel(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(command: &Command) -> Result<(), HkError> {
    let args = command.args();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }

    let cfg = load_config(&args.config)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;

    let mut waves: Vec<(String, WaveFunction)> = Vec::new();
    let table: ErrorTable = match command {
        Command::Identity(_) => run_identity(&cfg)?,
        Command::Converge(_) => run_converge(&cfg)?,
        Command::Compare(_) => run_compare(&cfg)?,
        Command::Propagate(_) => {
            let (table, w) = run_propagate(&cfg)?;
            waves = w;
            table
        }
        Command::Reference(_) => {
            let (table, w) = run_reference(&cfg)?;
            waves = w;
            table
        }
    };

    let csv_path = out_dir.join(format!("{}.csv", command.name()));
    table.write_csv(&csv_path)?;
    print!("{}", table.to_csv_string());
    eprintln!("wrote {}", csv_path.display());

    for (label, psi) in &waves {
        let path = out_dir.join(format!("{label}.csv"));
        psi.save_csv(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig, HkError> {
    match RunConfig::load(path) {
        Ok(cfg) => Ok(cfg),
        Err(HkError::Io(e)) => Err(HkError::ConfigError(format!(
            "cannot read {}: {e}",
            path.display()
        ))),
        Err(other) => Err(other),
    }
}

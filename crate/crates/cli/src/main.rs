use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod error;
mod experiments;

use error::CliError;

#[derive(Parser)]
#[command(name = "cavitynet", version, about = "Cascaded cavity-memory transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Release and capture pump waveforms
    Synthesize(Common),
    /// Full state transfer with energy bookkeeping
    Transfer(Common),
    /// Half release into the receiver and entanglement metrics
    Entangle(Common),
    /// Code fidelities, error correction and Kerr fit at one efficiency
    Correct(Common),
    /// Break-even sweep over transfer efficiency
    Sweep(Common),
    /// Wigner tomography and reconstruction of the cardinal states
    Tomo(Common),
    /// Process matrix of the lossy channel
    Process(Common),
    /// Run the experiment named in the config
    Run(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file, merged over the built-in defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic noise (overrides seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key, e.g. --set budget.eta_tx=0.8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<PathBuf, CliError> {
    let (name, common) = match command {
        Command::Synthesize(c) => (Some("synthesize"), c),
        Command::Transfer(c) => (Some("transfer"), c),
        Command::Entangle(c) => (Some("entangle"), c),
        Command::Correct(c) => (Some("correct"), c),
        Command::Sweep(c) => (Some("sweep"), c),
        Command::Tomo(c) => (Some("tomo"), c),
        Command::Process(c) => (Some("process"), c),
        Command::Run(c) => (None, c),
    };
    let mut overrides = Vec::new();
    if let Some(n) = name {
        overrides.push(format!("experiment=\"{n}\""));
    }
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.extend(common.overrides.iter().cloned());
    let mut scenario = config::load(common.config.as_deref(), &overrides)?;
    if let Some(out) = common.out {
        scenario.output_dir = out;
    }
    let report = experiments::run(&scenario)?;
    write_report(&scenario.output_dir, report)?;
    Ok(scenario.output_dir)
}

fn write_report(dir: &Path, report: experiments::Report) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, table) in &report.tables {
        let file = fs::File::create(dir.join(format!("{name}.tsv")))?;
        table
            .write_to(std::io::BufWriter::new(file))
            .map_err(|source| CliError::Core { context: format!("writing {name}.tsv"), source })?;
    }
    let mut summary = report.summary;
    summary.insert(
        "tables".into(),
        report.tables.iter().map(|(n, _)| format!("{n}.tsv")).collect::<Vec<_>>().into(),
    );
    let text = serde_json::to_string_pretty(&summary).expect("json values serialize");
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

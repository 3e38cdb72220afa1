use aperiodic_lorentz::pipeline::{
    config_schema, export_plots_data, load_report, run_until, ExperimentConfig, PipelineError,
};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lorentz", version, about = "Lorentz gases on aperiodic Delone sets")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the patch and scatterer configuration.
    Generate,
    /// Measure repetitivity, catalogs and label frequencies.
    Analyze,
    /// Build the tower and its box measures.
    Tower,
    /// Estimate the maximal free path.
    Horizon,
    /// Build witness observables and their Hölder seminorms.
    Witnesses,
    /// Correlation series, zero-window checks and lower bounds.
    Correlations,
    /// Rate verdict tables.
    Verdict,
    /// All stages.
    Run,
    /// Write plot-ready CSV files from a finished run.
    Export,
    /// Print the JSON schema of the configuration.
    Schema,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Validation("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
    }
    let last = match cli.command {
        Command::Schema => {
            print!("{}", config_schema());
            return Ok(());
        }
        Command::Export => {
            let cfg = load(cli)?;
            let report = load_report(&cfg.output)?;
            for p in export_plots_data(&report, &cfg.output)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        Command::Generate => "generate",
        Command::Analyze => "analyze",
        Command::Tower => "tower",
        Command::Horizon => "horizon",
        Command::Witnesses => "witnesses",
        Command::Correlations => "correlations",
        Command::Verdict | Command::Run => "verdict",
    };
    let cfg = load(cli)?;
    let report = run_until(&cfg, last)?;
    println!("{}", serde_json::to_string_pretty(&report.headline).expect("headline serializes"));
    if report.tainted {
        eprintln!("warning: run used allow_infinite_horizon; results are tainted");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use trajsynth::episode::load_asset_catalog;
use trajsynth::pipeline::{
    inspect_episode, run_metrics, run_synthesis, validate_with_asset, PipelineConfig,
};
use trajsynth::quality::DEFAULT_S_REF;
use trajsynth::{fixtures, pipeline};

#[derive(Parser)]
#[command(
    name = "trajsynth",
    version,
    about = "Synthesize manipulation episodes by replaying recorded trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthesis pipeline described by a config file.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score every episode in a dataset directory and write metrics.json.
    Metrics {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_S_REF)]
        s_ref: f64,
    },
    /// Replay one episode against one catalog asset and print the verdict.
    Validate {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        asset: String,
        #[arg(long)]
        catalog: PathBuf,
        /// Pipeline config supplying thresholds; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a JSON summary of an episode directory.
    Inspect {
        #[arg(long)]
        episode: PathBuf,
    },
    /// Write the built-in demo dataset, catalog, and config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        episodes: usize,
        #[arg(long, default_value_t = fixtures::IMAGE_SIZE)]
        size: u32,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synthesize { config } => {
            let cfg = PipelineConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let summary = run_synthesis(&cfg)?;
            let r = &summary.report;
            eprintln!(
                "attempted {}, validated {}, emitted {}, discarded {:?}, episode errors {}",
                r.attempted,
                r.validated,
                r.emitted,
                r.discarded,
                r.errors.len()
            );
            for e in &r.errors {
                eprintln!("  {}: {}", e.source_episode_id, e.message);
            }
            eprintln!(
                "manifest: {}",
                cfg.output_dir.join(pipeline::MANIFEST_FILE).display()
            );
            Ok(if summary.exit_code() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Metrics { dataset, s_ref } => {
            let metrics = run_metrics(&dataset, s_ref)?;
            print_json(&metrics.aggregate)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            episode,
            asset,
            catalog,
            config,
        } => {
            let cfg = match config {
                Some(path) => PipelineConfig::load(&path)?,
                None => PipelineConfig::new(PathBuf::new(), PathBuf::new(), catalog.clone()),
            };
            let catalog = load_asset_catalog(&catalog)?;
            let report = validate_with_asset(&episode, &catalog, &asset, &cfg)?;
            print_json(&report)?;
            Ok(if report.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Inspect { episode } => {
            print_json(&inspect_episode(&episode)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixture {
            out,
            episodes,
            size,
        } => {
            let paths = fixtures::write_dataset(&out, episodes, size)?;
            eprintln!("config: {}", paths.config.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

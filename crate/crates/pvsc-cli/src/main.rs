//! `pvsc` — experiment driver for the semantic video link simulator.
//!
//! Three subcommands: `run` executes a sweep grid from a JSON config and
//! writes per-frame and summary CSVs, `bd` compares two summary CSVs as
//! rate–quality curves, and `gen` materializes a synthetic clip as a raw
//! planar file. Identical configs and seeds produce byte-identical outputs.

mod bd;
mod config;
mod sweep;
mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CliError, ExperimentConfig};
use synth::SyntheticSpec;

#[derive(Parser)]
#[command(name = "pvsc", version, about = "Semantic video link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a JSON experiment config.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Directory for the output CSVs (created if missing).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Worker threads for sweep points (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// BD rate delta between two summary CSVs.
    Bd {
        /// Anchor summary CSV.
        #[arg(long)]
        anchor: PathBuf,
        /// Test summary CSV.
        #[arg(long)]
        test: PathBuf,
        /// Quality column to compare on.
        #[arg(long, default_value = "psnr")]
        metric: String,
    },
    /// Generate a synthetic clip as headerless planar 8-bit video.
    Gen {
        /// Generator spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output raw file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out_dir,
            jobs,
        } => run(&config, &out_dir, jobs),
        Command::Bd {
            anchor,
            test,
            metric,
        } => bd::bd_between(&anchor, &test, &metric).map(|line| println!("{line}")),
        Command::Gen { spec, out } => gen(&spec, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Master seed: the config value unless PVSC_SEED overrides it.
fn master_seed(config: &ExperimentConfig) -> Result<u64, CliError> {
    match std::env::var("PVSC_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::new(format!("PVSC_SEED: not a u64: {text:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(config.seed),
        Err(e) => Err(CliError::new(format!("PVSC_SEED: {e}"))),
    }
}

fn run(config_path: &Path, out_dir: &Path, jobs: Option<usize>) -> Result<(), CliError> {
    let text =
        std::fs::read_to_string(config_path).map_err(|e| CliError::in_file(config_path, e))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::in_file(config_path, e))?;
    config
        .validate()
        .map_err(|e| CliError::in_file(config_path, e))?;
    let seed = master_seed(&config)?;
    let frames = config.input.load()?;

    std::fs::create_dir_all(out_dir)?;
    let results = sweep::run_grid(&config, &frames, seed, jobs);
    sweep::write_frames_csv(&out_dir.join(&config.output.frames_csv), &results)?;
    sweep::write_summary_csv(&out_dir.join(&config.output.summary_csv), &results)?;
    sweep::print_table(&mut std::io::stdout(), &results);

    let failures: Vec<_> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        for (point, err) in &failures {
            eprintln!("point {}: {err}", point.seq_id());
        }
        Err(CliError::new(format!(
            "{} of {} sweep points failed",
            failures.len(),
            results.len()
        )))
    }
}

fn gen(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| CliError::in_file(spec_path, e))?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| CliError::in_file(spec_path, e))?;
    let input = synth::InputSpec::Synthetic(spec.clone());
    input
        .validate()
        .map_err(|e| CliError::in_file(spec_path, e))?;
    let frames = synth::generate(&spec);
    synth::write_raw(&frames, out)?;
    println!(
        "wrote {} frames of {}x{}x{} ({} bytes) to {}",
        frames.len(),
        spec.height,
        spec.width,
        spec.channels,
        frames.len() * spec.height * spec.width * spec.channels,
        out.display()
    );
    Ok(())
}

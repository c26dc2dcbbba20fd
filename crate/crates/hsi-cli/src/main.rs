//! `hsi` — hyperspectral restoration pipeline.
//!
//! Subcommands cover the full loop: synthesize a clean cube, simulate a
//! degraded observation, restore it with the plug-and-play solver (or a
//! plain denoising pass), report quality metrics, export band images and
//! error maps, and train the toy denoiser. Every command is deterministic
//! for a fixed --seed; failures print one JSON object on stderr and exit
//! nonzero.

mod commands;
mod cubefile;
mod error;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hsi", version, about = "Hyperspectral image restoration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clean cube.
    Synth(commands::synth::SynthArgs),
    /// Apply a degradation operator and noise to a clean cube.
    Simulate(commands::simulate::SimulateArgs),
    /// Restore an observation (plug-and-play iteration or plain denoise).
    Restore(commands::restore::RestoreArgs),
    /// Print/export PSNR, SSIM, and SAM between two cubes.
    Report(commands::report::ReportArgs),
    /// Export one band as an 8-bit grayscale PNG.
    ExportPng(commands::export::ExportPngArgs),
    /// Export the scaled absolute-error map of one band as a PNG.
    ExportErrorMap(commands::export::ExportErrorMapArgs),
    /// Train the toy denoiser on synthetic patches and save a checkpoint.
    TrainToy(commands::train::TrainToyArgs),
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Restore(args) => commands::restore::run(args),
        Command::Report(args) => commands::report::run(args),
        Command::ExportPng(args) => commands::export::run_png(args),
        Command::ExportErrorMap(args) => commands::export::run_error_map(args),
        Command::TrainToy(args) => commands::train::run(args),
    };
    if let Err(err) = result {
        print_error(&err);
        std::process::exit(1);
    }
}

fn print_error(err: &CliError) {
    let payload = serde_json::json!({
        "code": err.code(),
        "message": err.to_string(),
    });
    eprintln!("{payload}");
}

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use hsi_core::grcnn::{self, GrcnnModel, ModelConfig, TrainConfig};
use hsi_core::synth::synthetic_patches;

use crate::cubefile::write_atomic;
use crate::error::{CliError, Result};

#[derive(Args)]
pub struct TrainToyArgs {
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of training patches (cropped from larger synthetic scenes).
    #[arg(long, default_value_t = 64)]
    pub patches: usize,
    #[arg(long, default_value_t = 32)]
    pub patch_rows: usize,
    #[arg(long, default_value_t = 32)]
    pub patch_cols: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    /// Side length of the synthetic scenes patches are cropped from.
    #[arg(long, default_value_t = 64)]
    pub scene: usize,
    /// Stage widths, comma separated.
    #[arg(long, default_value = "8,16,32")]
    pub widths: String,
    #[arg(long, default_value_t = 3)]
    pub epochs_fixed: usize,
    #[arg(long, default_value_t = 7)]
    pub epochs_random: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 50.0)]
    pub sigma_fixed: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_lo: f64,
    #[arg(long, default_value_t = 50.0)]
    pub sigma_hi: f64,
    /// Train the variant without the noise level map input.
    #[arg(long, default_value_t = false)]
    pub no_noise_map: bool,
    /// Per-step loss curve CSV output path.
    #[arg(long)]
    pub loss_curve: Option<PathBuf>,
}

pub fn run(args: TrainToyArgs) -> Result<()> {
    let widths: Vec<usize> = args
        .widths
        .split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| CliError::InvalidArgument(format!("bad width: {w}")))
        })
        .collect::<Result<_>>()?;
    let config = ModelConfig {
        widths,
        uses_noise_map: !args.no_noise_map,
        kernel_size: 3,
        trained_sigma_range: None,
    };
    let model = GrcnnModel::new(config, args.seed)?;
    println!("training {} parameters on {} patches", model.param_count(), args.patches);

    let patches = synthetic_patches(
        args.patches,
        (args.patch_rows, args.patch_cols, args.bands),
        (args.scene, args.scene),
        args.seed.wrapping_add(101),
    );
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs_fixed: args.epochs_fixed,
        epochs_random: args.epochs_random,
        batch_size: args.batch,
        sigma_fixed: args.sigma_fixed,
        sigma_range: (args.sigma_lo, args.sigma_hi),
        seed: args.seed.wrapping_add(202),
        ..TrainConfig::default()
    };
    let (model, report) = grcnn::train(model, &patches, &cfg)?;

    // save atomically: serialize, then go through the shared writer
    let bytes = grcnn::checkpoint::to_bytes(&model)?;
    write_atomic(&args.out, &bytes)?;

    if let Some(path) = &args.loss_curve {
        let mut csv = String::from("step,phase,loss\n");
        for (i, loss) in report.step_losses.iter().enumerate() {
            let phase = if i < report.phase_boundary { 1 } else { 2 };
            let _ = writeln!(csv, "{i},{phase},{loss:.8e}");
        }
        write_atomic(path, csv.as_bytes())?;
    }
    println!(
        "trained {} steps (final loss {:.3e}) -> {}",
        report.step_losses.len(),
        report.step_losses.last().unwrap(),
        args.out.display()
    );
    Ok(())
}

use std::path::PathBuf;

use clap::Args;
use hsi_core::degrade::{gaussian_kernel2, random_mask, stripe_mask, TaskOperator};
use hsi_core::HsiCube;
use ndarray::Array3;

use crate::commands::{apply_noise_chain, parse_noise_spec, read_cube_arg};
use crate::cubefile::write_cube;
use crate::error::{CliError, Result};

#[derive(Args)]
pub struct SimulateArgs {
    /// One of: denoise, sr, cs, inpaint.
    #[arg(long)]
    pub task: String,
    /// Clean input cube.
    #[arg(long)]
    pub input: PathBuf,
    /// Observation output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth copy output path.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Noise spec, e.g. gaussian:30, noniid:70+stripe, none.
    #[arg(long, default_value = "none")]
    pub noise: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    ///

    /// Super-resolution downsampling factor.
    #[arg(long, default_value_t = 2)]
    pub factor: usize,
    /// Blur kernel extent (sr).
    #[arg(long, default_value_t = 9)]
    pub blur_size: usize,
    /// Blur kernel deviation in pixels (sr).
    #[arg(long, default_value_t = 3.0)]
    pub blur_sigma: f64,
    /// Existing mask cube to use (inpaint).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Where to store the generated mask cube (inpaint, cs).
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    /// Fraction of missing voxels for generated random masks (inpaint).
    #[arg(long, default_value_t = 0.5)]
    pub missing: f64,
    /// Generated mask style: random (voxel-wise) or stripes (inpaint).
    #[arg(long, default_value = "random")]
    pub mask_kind: String,
    /// Keep observation values outside [0, 1] instead of clipping.
    #[arg(long, default_value_t = false)]
    pub no_clip: bool,
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let clean = read_cube_arg(&args.input)?;
    let (rows, cols, bands) = clean.dims();
    let noise = parse_noise_spec(&args.noise, args.seed.wrapping_add(7_777))?;

    let (observation, mask_written): (HsiCube, Option<HsiCube>) = match args.task.as_str() {
        "denoise" => (clean.clone(), None),
        "sr" => {
            let blur = gaussian_kernel2(args.blur_size, args.blur_sigma);
            let op = TaskOperator::super_res(blur, args.factor)?;
            (op.apply(&clean)?, None)
        }
        "cs" => {
            let op = TaskOperator::cassi(rows, cols, bands, args.seed);
            let masks = match &op {
                TaskOperator::Sensing { masks, .. } => masks.clone(),
                _ => unreachable!(),
            };
            let mask_cube = HsiCube::from_array(masks);
            (op.apply(&clean)?, Some(mask_cube))
        }
        "inpaint" => {
            let mask = match &args.mask {
                Some(path) => read_cube_arg(path)?,
                None => match args.mask_kind.as_str() {
                    "random" => random_mask(rows, cols, bands, args.missing, args.seed),
                    "stripes" => stripe_mask(rows, cols, bands, (0.05, 0.15), args.seed),
                    other => {
                        return Err(CliError::InvalidArgument(format!(
                            "unknown mask kind: {other}"
                        )))
                    }
                },
            };
            if mask.dims() != clean.dims() {
                return Err(CliError::IncompatibleDims(format!(
                    "mask {:?} vs cube {:?}",
                    mask.dims(),
                    clean.dims()
                )));
            }
            let op = TaskOperator::inpaint(mask.clone())?;
            (op.apply(&clean)?, Some(mask))
        }
        other => return Err(CliError::UnknownTask(other.to_string())),
    };

    let mut observation = apply_noise_chain(&observation, &noise)?;
    if !args.no_clip {
        observation = observation.clamp(0.0, 1.0);
    }
    // masking removes voxels entirely: keep them at zero after noise
    if args.task == "inpaint" {
        if let Some(mask) = &mask_written {
            observation = observation.hadamard(mask)?;
        }
    }

    write_cube(&observation, &args.out)?;
    if let Some(gt_path) = &args.gt {
        write_cube(&clean, gt_path)?;
    }
    if let (Some(mask), Some(path)) = (&mask_written, &args.mask_out) {
        write_cube(mask, path)?;
    }
    println!(
        "simulated {}: observation {:?} -> {}",
        args.task,
        observation.dims(),
        args.out.display()
    );
    Ok(())
}

/// Rebuild the sensing operator stored as a mask cube (canonical shifts).
pub fn sensing_from_mask_cube(mask: &HsiCube) -> Result<TaskOperator> {
    let (rows, cols, bands) = mask.dims();
    let mut planes = Array3::zeros((bands, rows, cols));
    planes.assign(mask.data());
    Ok(TaskOperator::sensing_from_masks(planes)?)
}

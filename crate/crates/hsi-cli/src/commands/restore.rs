use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use hsi_core::admm::{
    self, BoxFilterDenoiser, Denoiser, GrcnnDenoiser, IdentityDenoiser, RunOptions,
};
use hsi_core::degrade::{gaussian_kernel2, TaskOperator};
use hsi_core::grcnn;

use crate::commands::{read_cube_arg, simulate::sensing_from_mask_cube};
use crate::cubefile::{write_atomic, write_cube};
use crate::error::{CliError, Result};

#[derive(Args)]
pub struct RestoreArgs {
    /// One of: denoise, sr, cs, inpaint.
    #[arg(long)]
    pub task: String,
    /// Observation cube.
    #[arg(long)]
    pub input: PathBuf,
    /// Restored cube output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained model checkpoint (.grc). Without it, --denoiser is used.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fallback prior when no model is given: identity or box:R.
    #[arg(long, default_value = "identity")]
    pub denoiser: String,
    /// Starting denoiser level (also the strength for --task denoise).
    #[arg(long, default_value_t = admm::DEFAULT_SIGMA1)]
    pub sigma1: f64,
    /// Final denoiser level.
    #[arg(long, default_value_t = admm::DEFAULT_SIGMA2)]
    pub sigma2: f64,
    /// Iteration count; task defaults: sr 25, cs 50, inpaint 100.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Weighting term linking denoiser level and penalty.
    #[arg(long, default_value_t = admm::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Trace CSV output path (iter, sigma, rho, primal residual, psnr).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Ground truth; adds a psnr column to the trace.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Mask cube (inpaint: binary mask; cs: sensing mask planes).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Super-resolution factor (must match simulation).
    #[arg(long, default_value_t = 2)]
    pub factor: usize,
    #[arg(long, default_value_t = 9)]
    pub blur_size: usize,
    #[arg(long, default_value_t = 3.0)]
    pub blur_sigma: f64,
    /// Keep iterates unprojected instead of clamping to [0, 1].
    #[arg(long, default_value_t = false)]
    pub no_clamp: bool,
}

fn default_iters(task: &str) -> usize {
    match task {
        "sr" => 25,
        "cs" => 50,
        _ => 100,
    }
}

fn build_denoiser(args: &RestoreArgs) -> Result<Box<dyn Denoiser>> {
    if let Some(path) = &args.model {
        if !path.exists() {
            return Err(CliError::MissingFile(path.display().to_string()));
        }
        let model = grcnn::load(path)?;
        return Ok(Box::new(GrcnnDenoiser::new(model)));
    }
    match args.denoiser.split_once(':') {
        None if args.denoiser == "identity" => Ok(Box::new(IdentityDenoiser)),
        Some(("box", r)) => {
            let radius = r
                .parse()
                .map_err(|_| CliError::InvalidArgument(format!("bad box radius: {r}")))?;
            Ok(Box::new(BoxFilterDenoiser { radius }))
        }
        _ => Err(CliError::InvalidArgument(format!(
            "unknown denoiser: {} (expected identity or box:R)",
            args.denoiser
        ))),
    }
}

pub fn run(args: RestoreArgs) -> Result<()> {
    let y = read_cube_arg(&args.input)?;
    let denoiser = build_denoiser(&args)?;

    if args.task == "denoise" {
        let restored = denoiser.denoise(&y, args.sigma1)?;
        write_cube(&restored, &args.out)?;
        if let Some(trace_path) = &args.trace {
            let mut csv = String::from("iter,sigma,rho,primal_residual,psnr\n");
            let psnr = match &args.gt {
                Some(gt) => format!("{:.6}", hsi_core::metrics::psnr(&read_cube_arg(gt)?, &restored)?.0),
                None => String::new(),
            };
            let _ = writeln!(csv, "0,{:.6},,{},{}", args.sigma1, 0.0, psnr);
            write_atomic(trace_path, csv.as_bytes())?;
        }
        println!("denoised at sigma {} -> {}", args.sigma1, args.out.display());
        return Ok(());
    }

    let op = match args.task.as_str() {
        "sr" => {
            let blur = gaussian_kernel2(args.blur_size, args.blur_sigma);
            TaskOperator::super_res(blur, args.factor)?
        }
        "cs" => {
            let mask_path = args.mask.as_ref().ok_or_else(|| {
                CliError::InvalidArgument("cs restore needs --mask (sensing mask cube)".into())
            })?;
            sensing_from_mask_cube(&read_cube_arg(mask_path)?)?
        }
        "inpaint" => {
            let mask_path = args.mask.as_ref().ok_or_else(|| {
                CliError::InvalidArgument("inpaint restore needs --mask".into())
            })?;
            TaskOperator::inpaint(read_cube_arg(mask_path)?)?
        }
        other => return Err(CliError::UnknownTask(other.to_string())),
    };

    let iters = args.iters.unwrap_or_else(|| default_iters(&args.task));
    let schedule = admm::make_schedule(args.sigma1, args.sigma2, iters, args.lambda)?;
    let gt = match &args.gt {
        Some(path) => Some(read_cube_arg(path)?),
        None => None,
    };
    let options = RunOptions {
        ground_truth: gt.as_ref(),
        initial: None,
        value_range: if args.no_clamp { None } else { Some((0.0, 1.0)) },
    };
    let result = admm::run(&op, &y, denoiser.as_ref(), &schedule, options)?;

    write_cube(&result.restored, &args.out)?;
    if let Some(trace_path) = &args.trace {
        let mut csv = String::from("iter,sigma,rho,primal_residual,psnr\n");
        for row in &result.trace {
            let psnr = row.psnr.map(|p| format!("{p:.6}")).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{},{:.6},{:.6},{:.6e},{}",
                row.iteration, row.sigma, row.rho, row.primal_residual, psnr
            );
        }
        write_atomic(trace_path, csv.as_bytes())?;
    }
    let last = result.trace.last().expect("at least one iteration");
    println!(
        "restored {} in {} iterations (final residual {:.3e}) -> {}",
        args.task,
        result.trace.len(),
        last.primal_residual,
        args.out.display()
    );
    Ok(())
}

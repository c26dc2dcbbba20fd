use std::path::PathBuf;

use clap::Args;
use hsi_core::HsiCube;
use image::{GrayImage, Luma};

use crate::commands::read_cube_arg;
use crate::error::{CliError, Result};

#[derive(Args)]
pub struct ExportPngArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Band index (0-based).
    #[arg(long, default_value_t = 0)]
    pub band: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ExportErrorMapArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub band: usize,
    /// Brightness gain applied to the absolute error before quantization.
    #[arg(long, default_value_t = 5.0)]
    pub gain: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn band_image(cube: &HsiCube, band: usize, f: impl Fn(usize, usize) -> f64) -> Result<GrayImage> {
    if band >= cube.bands() {
        return Err(CliError::InvalidArgument(format!(
            "band {band} out of range (cube has {} bands)",
            cube.bands()
        )));
    }
    let (rows, cols, _) = cube.dims();
    let mut img = GrayImage::new(cols as u32, rows as u32);
    for r in 0..rows {
        for c in 0..cols {
            img.put_pixel(c as u32, r as u32, Luma([to_u8(f(r, c))]));
        }
    }
    Ok(img)
}

fn save_png(img: &GrayImage, path: &PathBuf) -> Result<()> {
    // encode in memory, then go through the atomic writer
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| CliError::InvalidArgument(format!("png encoding failed: {e}")))?;
    crate::cubefile::write_atomic(path, &bytes)
}

pub fn run_png(args: ExportPngArgs) -> Result<()> {
    let cube = read_cube_arg(&args.input)?;
    let band = args.band;
    let img = band_image(&cube, band, |r, c| cube.get(band, r, c))?;
    save_png(&img, &args.out)?;
    println!("wrote band {band} to {}", args.out.display());
    Ok(())
}

pub fn run_error_map(args: ExportErrorMapArgs) -> Result<()> {
    let gt = read_cube_arg(&args.gt)?;
    let pred = read_cube_arg(&args.pred)?;
    if gt.dims() != pred.dims() {
        return Err(CliError::IncompatibleDims(format!(
            "{:?} vs {:?}",
            gt.dims(),
            pred.dims()
        )));
    }
    let band = args.band;
    // brighter pixels mark larger reconstruction error
    let img = band_image(&gt, band, |r, c| {
        (gt.get(band, r, c) - pred.get(band, r, c)).abs() * args.gain
    })?;
    save_png(&img, &args.out)?;
    println!("wrote error map for band {band} to {}", args.out.display());
    Ok(())
}

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use hsi_core::metrics;

use crate::commands::read_cube_arg;
use crate::cubefile::write_atomic;
use crate::error::Result;

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the report as CSV (overall plus per-band rows).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run(args: ReportArgs) -> Result<()> {
    let gt = read_cube_arg(&args.gt)?;
    let pred = read_cube_arg(&args.pred)?;
    let report = metrics::evaluate(&gt, &pred)?;

    println!(
        "psnr {:.4} dB  ssim {:.4}  sam {:.4} rad",
        report.psnr, report.ssim, report.sam
    );

    if let Some(path) = &args.json {
        let payload = serde_json::json!({
            "psnr": report.psnr,
            "ssim": report.ssim,
            "sam": report.sam,
            "psnr_bands": report.psnr_bands,
            "ssim_bands": report.ssim_bands,
            "sam_skipped_pixels": report.sam_skipped,
        });
        write_atomic(path, serde_json::to_string_pretty(&payload).unwrap().as_bytes())?;
    }
    if let Some(path) = &args.csv {
        let mut csv = String::from("scope,psnr,ssim,sam\n");
        let _ = writeln!(
            csv,
            "all,{:.6},{:.6},{:.6}",
            report.psnr, report.ssim, report.sam
        );
        for (b, (p, s)) in report
            .psnr_bands
            .iter()
            .zip(&report.ssim_bands)
            .enumerate()
        {
            let _ = writeln!(csv, "band{b},{p:.6},{s:.6},");
        }
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(())
}

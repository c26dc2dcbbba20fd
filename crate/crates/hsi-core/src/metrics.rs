//! Quality indices: PSNR and SSIM averaged band-wise, and the mean spectral
//! angle (SAM) over pixels. Cubes are assumed normalized to unit data range.

use ndarray::Array2;

use crate::cube::HsiCube;
use crate::error::{CoreError, Result};

/// PSNR reported for a band with zero error.
pub const PSNR_CAP_DB: f64 = 100.0;

/// SSIM window: 11x11 Gaussian, sigma 1.5, standard stabilizers on unit range.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// All three indices plus the per-band breakdowns.
#[derive(Debug, Clone)]
pub struct MetricReport {
    /// Mean of the per-band PSNR values, dB.
    pub psnr: f64,
    /// Mean of the per-band SSIM values.
    pub ssim: f64,
    /// Mean spectral angle over pixels, radians.
    pub sam: f64,
    pub psnr_bands: Vec<f64>,
    pub ssim_bands: Vec<f64>,
    /// Pixels excluded from SAM because one spectrum had zero norm.
    pub sam_skipped: usize,
}

fn check_dims(gt: &HsiCube, pred: &HsiCube) -> Result<()> {
    if gt.dims() != pred.dims() {
        return Err(CoreError::DimMismatch(format!(
            "metrics: {:?} vs {:?}",
            gt.dims(),
            pred.dims()
        )));
    }
    Ok(())
}

/// Per-band PSNR on unit data range, capped at 100 dB, plus the band mean.
pub fn psnr(gt: &HsiCube, pred: &HsiCube) -> Result<(f64, Vec<f64>)> {
    check_dims(gt, pred)?;
    let (rows, cols, bands) = gt.dims();
    let plane = (rows * cols) as f64;
    let mut per_band = Vec::with_capacity(bands);
    for b in 0..bands {
        let mut mse = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let d = gt.get(b, r, c) - pred.get(b, r, c);
                mse += d * d;
            }
        }
        mse /= plane;
        let db = if mse == 0.0 {
            PSNR_CAP_DB
        } else {
            (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
        };
        per_band.push(db);
    }
    let mean = per_band.iter().sum::<f64>() / bands as f64;
    Ok((mean, per_band))
}

/// Per-band mean local SSIM with an 11x11 Gaussian window, plus the band mean.
pub fn ssim(gt: &HsiCube, pred: &HsiCube) -> Result<(f64, Vec<f64>)> {
    check_dims(gt, pred)?;
    let (rows, cols, bands) = gt.dims();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(CoreError::InvalidArgument(format!(
            "ssim needs planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {rows}x{cols}"
        )));
    }
    let window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let mut per_band = Vec::with_capacity(bands);
    for b in 0..bands {
        let g = gt.data().index_axis(ndarray::Axis(0), b);
        let p = pred.data().index_axis(ndarray::Axis(0), b);
        let mut sum = 0.0;
        let mut count = 0usize;
        // valid window placements only
        for r0 in 0..=rows - SSIM_WINDOW {
            for c0 in 0..=cols - SSIM_WINDOW {
                let (mut mu_g, mut mu_p) = (0.0, 0.0);
                let (mut gg, mut pp, mut gp) = (0.0, 0.0, 0.0);
                for wr in 0..SSIM_WINDOW {
                    for wc in 0..SSIM_WINDOW {
                        let w = window[(wr, wc)];
                        let a = g[(r0 + wr, c0 + wc)];
                        let bb = p[(r0 + wr, c0 + wc)];
                        mu_g += w * a;
                        mu_p += w * bb;
                        gg += w * a * a;
                        pp += w * bb * bb;
                        gp += w * a * bb;
                    }
                }
                let var_g = gg - mu_g * mu_g;
                let var_p = pp - mu_p * mu_p;
                let cov = gp - mu_g * mu_p;
                let s = ((2.0 * mu_g * mu_p + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mu_g * mu_g + mu_p * mu_p + SSIM_C1) * (var_g + var_p + SSIM_C2));
                sum += s;
                count += 1;
            }
        }
        per_band.push(sum / count as f64);
    }
    let mean = per_band.iter().sum::<f64>() / bands as f64;
    Ok((mean, per_band))
}

/// Mean spectral angle across pixels, radians. Zero-norm pixels are skipped
/// and counted; it is an error if every pixel is skipped.
pub fn sam(gt: &HsiCube, pred: &HsiCube) -> Result<(f64, usize)> {
    check_dims(gt, pred)?;
    let (rows, cols, bands) = gt.dims();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut skipped = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            let (mut dot, mut ng, mut np) = (0.0, 0.0, 0.0);
            for b in 0..bands {
                let a = gt.get(b, r, c);
                let p = pred.get(b, r, c);
                dot += a * p;
                ng += a * a;
                np += p * p;
            }
            if ng == 0.0 || np == 0.0 {
                skipped += 1;
                continue;
            }
            // sqrt(ng*np) rather than sqrt(ng)*sqrt(np): for identical
            // spectra fl(sqrt(fl(x*x))) == x, so the angle is exactly zero
            let cosine = (dot / (ng * np).sqrt()).clamp(-1.0, 1.0);
            sum += cosine.acos();
            count += 1;
        }
    }
    if count == 0 {
        return Err(CoreError::EmptyObservation(
            "all pixels have zero-norm spectra".into(),
        ));
    }
    Ok((sum / count as f64, skipped))
}

/// Evaluate all three indices at once.
pub fn evaluate(gt: &HsiCube, pred: &HsiCube) -> Result<MetricReport> {
    let (psnr_mean, psnr_bands) = psnr(gt, pred)?;
    let (ssim_mean, ssim_bands) = ssim(gt, pred)?;
    let (sam_mean, sam_skipped) = sam(gt, pred)?;
    Ok(MetricReport {
        psnr: psnr_mean,
        ssim: ssim_mean,
        sam: sam_mean,
        psnr_bands,
        ssim_bands,
        sam_skipped,
    })
}

fn gaussian_window(size: usize, sigma: f64) -> Array2<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut w = Array2::from_shape_fn((size, size), |(r, c)| {
        let dy = r as f64 - center;
        let dx = c as f64 - center;
        (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
    });
    let sum: f64 = w.iter().sum();
    w.mapv_inplace(|v| v / sum);
    w
}

//! The pluggable Gaussian denoiser interface of the solver's prior step,
//! with trivial implementations for testing and a wrapper adapting the
//! trained network.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::cube::HsiCube;
use crate::error::Result;
use crate::grcnn::GrcnnModel;

/// A Gaussian denoiser: estimate the clean cube given the corrupted cube
/// and the corruption strength sigma (0-255 scale).
pub trait Denoiser {
    fn denoise(&self, noisy: &HsiCube, sigma: f64) -> Result<HsiCube>;
}

/// Pass-through: turns the solver into plain least squares.
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, noisy: &HsiCube, _sigma: f64) -> Result<HsiCube> {
        Ok(noisy.clone())
    }
}

/// Per-band box mean with clamped borders; ignores sigma. A crude prior
/// useful without a trained model.
pub struct BoxFilterDenoiser {
    pub radius: usize,
}

impl Denoiser for BoxFilterDenoiser {
    fn denoise(&self, noisy: &HsiCube, _sigma: f64) -> Result<HsiCube> {
        let (rows, cols, bands) = noisy.dims();
        let r = self.radius as isize;
        Ok(HsiCube::from_fn(rows, cols, bands, |b, row, col| {
            let mut acc = 0.0;
            let mut n = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let rr = (row as isize + dy).clamp(0, rows as isize - 1) as usize;
                    let cc = (col as isize + dx).clamp(0, cols as isize - 1) as usize;
                    acc += noisy.get(b, rr, cc);
                    n += 1.0;
                }
            }
            acc / n
        }))
    }
}

/// The trained network as a plug-in prior. Requested levels are clamped to
/// the range the weights were trained for; out-of-range requests warn once.
pub struct GrcnnDenoiser {
    model: GrcnnModel,
    warned: AtomicBool,
}

impl GrcnnDenoiser {
    pub fn new(model: GrcnnModel) -> Self {
        Self {
            model,
            warned: AtomicBool::new(false),
        }
    }

    pub fn model(&self) -> &GrcnnModel {
        &self.model
    }

    fn clamp_sigma(&self, sigma: f64) -> f64 {
        match self.model.config().trained_sigma_range {
            Some((lo, hi)) => {
                let clamped = sigma.clamp(lo, hi);
                if clamped != sigma && !self.warned.swap(true, Ordering::Relaxed) {
                    log::warn!(
                        "denoiser level {sigma} outside trained range [{lo}, {hi}]; clamping"
                    );
                }
                clamped
            }
            None => sigma,
        }
    }
}

impl Denoiser for GrcnnDenoiser {
    fn denoise(&self, noisy: &HsiCube, sigma: f64) -> Result<HsiCube> {
        self.model.denoise(noisy, self.clamp_sigma(sigma))
    }
}

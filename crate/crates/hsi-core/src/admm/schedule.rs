//! Per-iteration denoiser strength and penalty weight.
//!
//! The denoiser noise level decays log-uniformly from `sigma1` to `sigma2`
//! over the iterations; the penalty follows as rho = lambda / (sigma/255)^2,
//! i.e. sigma = sqrt(lambda / rho) on the normalized scale.

use crate::error::{CoreError, Result};

/// Default weighting term.
pub const DEFAULT_LAMBDA: f64 = 1.5;
/// Default starting/final denoiser levels (0-255 scale).
pub const DEFAULT_SIGMA1: f64 = 50.0;
pub const DEFAULT_SIGMA2: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda: f64,
    /// Denoiser level per iteration, non-increasing.
    pub sigmas: Vec<f64>,
    /// Penalty per iteration, non-decreasing.
    pub rhos: Vec<f64>,
}

/// Build the `iterations`-step schedule.
pub fn make_schedule(sigma1: f64, sigma2: f64, iterations: usize, lambda: f64) -> Result<Schedule> {
    if !(sigma2 > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "final noise level must be positive, got {sigma2}"
        )));
    }
    if sigma1 < sigma2 {
        return Err(CoreError::InvalidArgument(format!(
            "noise levels must decay: sigma1 {sigma1} < sigma2 {sigma2}"
        )));
    }
    if iterations == 0 {
        return Err(CoreError::InvalidArgument("zero iterations".into()));
    }
    if !(lambda > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let sigmas: Vec<f64> = if iterations == 1 || sigma1 == sigma2 {
        vec![sigma1; iterations]
    } else {
        let (l1, l2) = (sigma1.ln(), sigma2.ln());
        (0..iterations)
            .map(|k| {
                // endpoints exact: exp(ln(s)) need not round back to s
                if k == 0 {
                    sigma1
                } else if k == iterations - 1 {
                    sigma2
                } else {
                    (l1 + (l2 - l1) * k as f64 / (iterations - 1) as f64).exp()
                }
            })
            .collect()
    };
    let rhos: Vec<f64> = sigmas.iter().map(|s| lambda / (s / 255.0).powi(2)).collect();
    Ok(Schedule {
        sigma1,
        sigma2,
        lambda,
        sigmas,
        rhos,
    })
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_range_repeats_level() {
        let s = make_schedule(50.0, 50.0, 3, 1.5).unwrap();
        assert_eq!(s.sigmas, vec![50.0, 50.0, 50.0]);
        let rho = 1.5 / (50.0 / 255.0_f64).powi(2);
        assert_eq!(s.rhos, vec![rho, rho, rho]);
    }

    #[test]
    fn three_step_log_spacing_hits_geometric_midpoint() {
        let s = make_schedule(40.0, 10.0, 3, 1.5).unwrap();
        assert!((s.sigmas[0] - 40.0).abs() <= 1e-12 * 40.0);
        assert!((s.sigmas[1] - 20.0).abs() <= 1e-12 * 20.0);
        assert!((s.sigmas[2] - 10.0).abs() <= 1e-12 * 10.0);
        for (sig, rho) in s.sigmas.iter().zip(&s.rhos) {
            assert_eq!(*rho, 1.5 / (sig / 255.0).powi(2));
        }
    }

    #[test]
    fn normalized_unit_sigma_gives_rho_lambda() {
        // sigma/255 == 1 makes rho equal the weighting term itself
        let s = make_schedule(255.0, 255.0, 1, 1.5).unwrap();
        assert_eq!(s.rhos[0], 1.5);
    }

    #[test]
    fn monotone_and_positive() {
        let s = make_schedule(50.0, 5.0, 24, 1.5).unwrap();
        for w in s.sigmas.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for w in s.rhos.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(s.rhos.iter().all(|r| r.is_finite() && *r > 0.0));
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(make_schedule(50.0, 0.0, 3, 1.5).is_err());
        assert!(make_schedule(50.0, -1.0, 3, 1.5).is_err());
        assert!(make_schedule(10.0, 20.0, 3, 1.5).is_err());
        assert!(make_schedule(50.0, 5.0, 0, 1.5).is_err());
        assert!(make_schedule(50.0, 5.0, 3, 0.0).is_err());
    }
}

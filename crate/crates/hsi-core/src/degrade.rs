//! Forward degradation operators and noise synthesizers.
//!
//! [`TaskOperator`] is the linear measurement map of each restoration task:
//! blur-then-downsample for super-resolution, mask-shift-and-sum snapshot
//! sensing, and elementwise masking for inpainting. `apply`/`apply_adjoint`
//! form an exact adjoint pair for every variant. [`NoiseModel`] covers the
//! i.i.d. / non-i.i.d. Gaussian, stripe, and impulse corruptions used to
//! simulate observations; synthesis is deterministic given the seed.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cube::HsiCube;
use crate::error::{CoreError, Result};

/// Linear degradation operator of one restoration task.
#[derive(Debug, Clone)]
pub enum TaskOperator {
    /// Circular blur followed by keeping every `factor`-th pixel per band.
    SuperRes { blur: Array2<f64>, factor: usize },
    /// Snapshot sensing: per-band mask, circular shift, sum across bands
    /// into a single measurement plane. `psi` is the diagonal of the
    /// measurement-domain Gram operator, precomputed at construction.
    Sensing {
        /// Shape (bands, rows, cols).
        masks: Array3<f64>,
        /// Per-band circular (row, col) shifts.
        shifts: Vec<(isize, isize)>,
        /// Shape (rows, cols).
        psi: Array2<f64>,
    },
    /// Elementwise binary masking (missing voxels read 0).
    Mask { mask: HsiCube },
}

impl TaskOperator {
    /// Blur-then-downsample operator. The blur kernel must sum to 1.
    pub fn super_res(blur: Array2<f64>, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(CoreError::InvalidArgument("zero downsampling factor".into()));
        }
        let sum: f64 = blur.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(CoreError::InvalidArgument(format!(
                "blur kernel sums to {sum}, expected 1"
            )));
        }
        Ok(Self::SuperRes { blur, factor })
    }

    /// General mask-shift-and-sum sensing operator.
    pub fn sensing(masks: Array3<f64>, shifts: Vec<(isize, isize)>) -> Result<Self> {
        let bands = masks.shape()[0];
        if shifts.len() != bands {
            return Err(CoreError::DimMismatch(format!(
                "{} shifts for {} mask planes",
                shifts.len(),
                bands
            )));
        }
        if masks.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("non-finite mask".into()));
        }
        let (rows, cols) = (masks.shape()[1], masks.shape()[2]);
        // Gram diagonal: sum over bands of the shifted squared masks. Each
        // band term is a permutation of a diagonal, so the composition
        // apply∘apply_adjoint is diagonal by construction; this materializes
        // that diagonal.
        let mut psi = Array2::<f64>::zeros((rows, cols));
        for b in 0..bands {
            for r in 0..rows {
                for c in 0..cols {
                    let m = masks[(b, r, c)];
                    let (sr, sc) = shifts[b];
                    let tr = wrap(r as isize + sr, rows);
                    let tc = wrap(c as isize + sc, cols);
                    psi[(tr, tc)] += m * m;
                }
            }
        }
        Ok(Self::Sensing { masks, shifts, psi })
    }

    /// Standard single-disperser snapshot geometry: one Bernoulli(0.5)
    /// binary mask per band, horizontally shifted by the band index.
    pub fn cassi(rows: usize, cols: usize, bands: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Array2::from_shape_fn((rows, cols), |_| {
            if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            }
        });
        let masks = Array3::from_shape_fn((bands, rows, cols), |(_, r, c)| base[(r, c)]);
        let shifts = (0..bands).map(|b| (0isize, b as isize)).collect();
        Self::sensing(masks, shifts).expect("consistent construction")
    }

    /// Snapshot operator rebuilt from stored mask planes with the canonical
    /// per-band horizontal shift (band index).
    pub fn sensing_from_masks(masks: Array3<f64>) -> Result<Self> {
        let bands = masks.shape()[0];
        let shifts = (0..bands).map(|b| (0isize, b as isize)).collect();
        Self::sensing(masks, shifts)
    }

    /// Inpainting operator; mask entries must be 0 or 1.
    pub fn inpaint(mask: HsiCube) -> Result<Self> {
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(CoreError::InvalidArgument(
                "inpainting mask entries must be 0 or 1".into(),
            ));
        }
        Ok(Self::Mask { mask })
    }

    /// Measurement produced from a clean cube.
    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        match self {
            Self::SuperRes { blur, factor } => {
                let (rows, cols, bands) = x.dims();
                if rows % factor != 0 || cols % factor != 0 {
                    return Err(CoreError::DimMismatch(format!(
                        "factor {factor} does not divide {rows}x{cols}"
                    )));
                }
                let mut y = HsiCube::zeros(rows / factor, cols / factor, bands);
                for b in 0..bands {
                    let band = x.data().index_axis(ndarray::Axis(0), b).to_owned();
                    let blurred = circular_convolve2(&band, blur);
                    for r in 0..rows / factor {
                        for c in 0..cols / factor {
                            y.set(b, r, c, blurred[(r * factor, c * factor)]);
                        }
                    }
                }
                Ok(y)
            }
            Self::Sensing { masks, shifts, .. } => {
                let (rows, cols, bands) = x.dims();
                if masks.shape() != [bands, rows, cols] {
                    return Err(CoreError::DimMismatch(format!(
                        "sensing masks {:?} vs cube {:?}",
                        masks.shape(),
                        x.dims()
                    )));
                }
                let mut plane = Array2::<f64>::zeros((rows, cols));
                for b in 0..bands {
                    let (sr, sc) = shifts[b];
                    for r in 0..rows {
                        for c in 0..cols {
                            let v = masks[(b, r, c)] * x.get(b, r, c);
                            let tr = wrap(r as isize + sr, rows);
                            let tc = wrap(c as isize + sc, cols);
                            plane[(tr, tc)] += v;
                        }
                    }
                }
                let mut y = HsiCube::zeros(rows, cols, 1);
                y.data_mut().index_axis_mut(ndarray::Axis(0), 0).assign(&plane);
                Ok(y)
            }
            Self::Mask { mask } => x.hadamard(mask),
        }
    }

    /// Exact adjoint of [`TaskOperator::apply`].
    pub fn apply_adjoint(&self, y: &HsiCube) -> Result<HsiCube> {
        match self {
            Self::SuperRes { blur, factor } => {
                let (ry, cy, bands) = y.dims();
                let (rows, cols) = (ry * factor, cy * factor);
                let mut x = HsiCube::zeros(rows, cols, bands);
                for b in 0..bands {
                    // zero-filled upsampling, then the blur adjoint
                    let mut up = Array2::<f64>::zeros((rows, cols));
                    for r in 0..ry {
                        for c in 0..cy {
                            up[(r * factor, c * factor)] = y.get(b, r, c);
                        }
                    }
                    let spread = circular_correlate2(&up, blur);
                    x.data_mut().index_axis_mut(ndarray::Axis(0), b).assign(&spread);
                }
                Ok(x)
            }
            Self::Sensing { masks, shifts, .. } => {
                let (rows, cols, ybands) = y.dims();
                if ybands != 1 {
                    return Err(CoreError::DimMismatch(format!(
                        "sensing adjoint expects a single-plane measurement, got {ybands} bands"
                    )));
                }
                let bands = masks.shape()[0];
                if masks.shape()[1] != rows || masks.shape()[2] != cols {
                    return Err(CoreError::DimMismatch(format!(
                        "sensing masks {:?} vs measurement {rows}x{cols}",
                        masks.shape()
                    )));
                }
                let mut x = HsiCube::zeros(rows, cols, bands);
                for b in 0..bands {
                    let (sr, sc) = shifts[b];
                    for r in 0..rows {
                        for c in 0..cols {
                            let tr = wrap(r as isize + sr, rows);
                            let tc = wrap(c as isize + sc, cols);
                            x.set(b, r, c, masks[(b, r, c)] * y.get(0, tr, tc));
                        }
                    }
                }
                Ok(x)
            }
            Self::Mask { mask } => y.hadamard(mask),
        }
    }

    /// Diagonal of the measurement-domain Gram operator (sensing only).
    pub fn gram_diagonal(&self) -> Option<&Array2<f64>> {
        match self {
            Self::Sensing { psi, .. } => Some(psi),
            _ => None,
        }
    }
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Circular 2D convolution with the kernel anchored at its center cell.
pub fn circular_convolve2(plane: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = plane.dim();
    let (kh, kw) = kernel.dim();
    let (ar, ac) = (kh / 2, kw / 2);
    let mut out = Array2::<f64>::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for j in 0..kh {
                for i in 0..kw {
                    let sr = wrap(r as isize - j as isize + ar as isize, rows);
                    let sc = wrap(c as isize - i as isize + ac as isize, cols);
                    acc += kernel[(j, i)] * plane[(sr, sc)];
                }
            }
            out[(r, c)] = acc;
        }
    }
    out
}

/// Adjoint of [`circular_convolve2`] (circular cross-correlation).
pub fn circular_correlate2(plane: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = plane.dim();
    let (kh, kw) = kernel.dim();
    let (ar, ac) = (kh / 2, kw / 2);
    let mut out = Array2::<f64>::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for j in 0..kh {
                for i in 0..kw {
                    let sr = wrap(r as isize + j as isize - ar as isize, rows);
                    let sc = wrap(c as isize + i as isize - ac as isize, cols);
                    acc += kernel[(j, i)] * plane[(sr, sc)];
                }
            }
            out[(r, c)] = acc;
        }
    }
    out
}

/// Normalized 2D Gaussian blur kernel.
pub fn gaussian_kernel2(size: usize, sigma: f64) -> Array2<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut k = Array2::from_shape_fn((size, size), |(r, c)| {
        let dy = r as f64 - center;
        let dx = c as f64 - center;
        (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
    });
    let sum: f64 = k.iter().sum();
    k.mapv_inplace(|v| v / sum);
    k
}

/// Delta kernel (identity blur).
pub fn delta_kernel2() -> Array2<f64> {
    Array2::from_elem((1, 1), 1.0)
}

/// Random voxel-wise binary mask keeping each voxel with probability
/// `1 - missing_fraction`.
pub fn random_mask(rows: usize, cols: usize, bands: usize, missing_fraction: f64, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::from_fn(rows, cols, bands, |_, _, _| {
        if rng.random::<f64>() < missing_fraction {
            0.0
        } else {
            1.0
        }
    })
}

/// Stripe mask: in each band a random subset of whole columns is missing.
pub fn stripe_mask(
    rows: usize,
    cols: usize,
    bands: usize,
    col_fraction: (f64, f64),
    seed: u64,
) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = HsiCube::from_fn(rows, cols, bands, |_, _, _| 1.0);
    for b in 0..bands {
        let frac = rng.random_range(col_fraction.0..=col_fraction.1);
        let n_cols = (frac * cols as f64).round() as usize;
        let mut idx: Vec<usize> = (0..cols).collect();
        idx.shuffle(&mut rng);
        for &c in idx.iter().take(n_cols) {
            for r in 0..rows {
                mask.set(b, r, c, 0.0);
            }
        }
    }
    mask
}

/// Kinds of synthetic measurement noise. Sigma values are on the 0-255
/// scale of 8-bit dynamic range; cubes are normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// Zero-mean Gaussian with one intensity everywhere.
    IidGaussian { sigma: f64 },
    /// Per-band Gaussian intensity drawn uniformly from [0, sigma_max].
    NonIid { sigma_max: f64 },
    /// A fraction of bands gets a random subset of columns offset downward.
    Stripe {
        band_fraction: f64,
        col_fraction_range: (f64, f64),
    },
    /// A fraction of bands gets salt-and-pepper outliers.
    Impulse {
        band_fraction: f64,
        intensity_range: (f64, f64),
    },
}

/// A noise synthesizer: a noise kind plus its RNG seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        match &self.kind {
            NoiseKind::IidGaussian { sigma } => {
                if *sigma < 0.0 {
                    return Err(CoreError::InvalidArgument("negative sigma".into()));
                }
            }
            NoiseKind::NonIid { sigma_max } => {
                if *sigma_max < 0.0 {
                    return Err(CoreError::InvalidArgument("negative sigma_max".into()));
                }
            }
            NoiseKind::Stripe {
                band_fraction,
                col_fraction_range,
            } => {
                if !frac_ok(*band_fraction)
                    || !frac_ok(col_fraction_range.0)
                    || !frac_ok(col_fraction_range.1)
                    || col_fraction_range.0 > col_fraction_range.1
                {
                    return Err(CoreError::InvalidArgument("stripe fractions outside [0,1]".into()));
                }
            }
            NoiseKind::Impulse {
                band_fraction,
                intensity_range,
            } => {
                if !frac_ok(*band_fraction)
                    || !frac_ok(intensity_range.0)
                    || !frac_ok(intensity_range.1)
                    || intensity_range.0 > intensity_range.1
                {
                    return Err(CoreError::InvalidArgument("impulse fractions outside [0,1]".into()));
                }
            }
        }
        Ok(())
    }
}

/// Paper-style defaults: stripes on one third of bands, 5-15% of columns.
pub fn default_stripe() -> NoiseKind {
    NoiseKind::Stripe {
        band_fraction: 1.0 / 3.0,
        col_fraction_range: (0.05, 0.15),
    }
}

/// Paper-style defaults: impulse on one third of bands, 10-70% of pixels.
pub fn default_impulse() -> NoiseKind {
    NoiseKind::Impulse {
        band_fraction: 1.0 / 3.0,
        intensity_range: (0.1, 0.7),
    }
}

/// Additive stripe offset magnitude range (fraction of dynamic range).
const STRIPE_OFFSET_RANGE: (f64, f64) = (0.25, 0.75);

/// Corrupt a cube. Deterministic for a fixed model seed.
pub fn add_noise(x: &HsiCube, model: &NoiseModel) -> Result<HsiCube> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let (rows, cols, bands) = x.dims();
    let mut out = x.clone();
    match &model.kind {
        NoiseKind::IidGaussian { sigma } => {
            if *sigma == 0.0 {
                return Ok(out);
            }
            let dist = Normal::new(0.0, sigma / 255.0)
                .map_err(|e| CoreError::InvalidArgument(e.to_string()))?;
            for v in out.as_mut_slice() {
                *v += dist.sample(&mut rng);
            }
        }
        NoiseKind::NonIid { sigma_max } => {
            for b in 0..bands {
                let sigma_b = rng.random_range(0.0..=*sigma_max);
                if sigma_b == 0.0 {
                    continue;
                }
                let dist = Normal::new(0.0, sigma_b / 255.0)
                    .map_err(|e| CoreError::InvalidArgument(e.to_string()))?;
                for r in 0..rows {
                    for c in 0..cols {
                        let v = out.get(b, r, c) + dist.sample(&mut rng);
                        out.set(b, r, c, v);
                    }
                }
            }
        }
        NoiseKind::Stripe {
            band_fraction,
            col_fraction_range,
        } => {
            let n_bands = ((band_fraction * bands as f64).ceil() as usize).min(bands);
            let mut band_idx: Vec<usize> = (0..bands).collect();
            band_idx.shuffle(&mut rng);
            for &b in band_idx.iter().take(n_bands) {
                let frac = rng.random_range(col_fraction_range.0..=col_fraction_range.1);
                let n_cols = ((frac * cols as f64).round() as usize).min(cols);
                let mut col_idx: Vec<usize> = (0..cols).collect();
                col_idx.shuffle(&mut rng);
                for &c in col_idx.iter().take(n_cols) {
                    let offset = rng.random_range(STRIPE_OFFSET_RANGE.0..=STRIPE_OFFSET_RANGE.1);
                    for r in 0..rows {
                        let v = out.get(b, r, c) - offset;
                        out.set(b, r, c, v);
                    }
                }
            }
        }
        NoiseKind::Impulse {
            band_fraction,
            intensity_range,
        } => {
            let n_bands = ((band_fraction * bands as f64).ceil() as usize).min(bands);
            let mut band_idx: Vec<usize> = (0..bands).collect();
            band_idx.shuffle(&mut rng);
            for &b in band_idx.iter().take(n_bands) {
                let p = rng.random_range(intensity_range.0..=intensity_range.1);
                for r in 0..rows {
                    for c in 0..cols {
                        if rng.random::<f64>() < p {
                            let v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                            out.set(b, r, c, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

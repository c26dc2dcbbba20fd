//! Closed-form data-fidelity updates.
//!
//! Every fast path solves the same regularized normal equations
//! (DᵀD + rho I) x = Dᵀy + rho x̃ for its operator structure:
//! frequency-domain division for blur-then-downsample, a diagonal
//! measurement-domain correction for snapshot sensing, and elementwise
//! division for masking. `x_update_dense_oracle` materializes D column by
//! column and solves the normal equations directly; it is the reference
//! every fast path is tested against.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::cube::HsiCube;
use crate::degrade::TaskOperator;
use crate::error::{CoreError, Result};
use crate::fft::{fft2_band, ifft2_band_real};

/// Unknown-count guard for the dense reference solver.
pub const DENSE_ORACLE_MAX_UNKNOWNS: usize = 4096;

/// Solve the regularized normal equations by materializing the operator.
///
/// Test/reference path only: cost grows with the cube of the unknown count.
pub fn x_update_dense_oracle(
    op: &TaskOperator,
    y: &HsiCube,
    x_tilde: &HsiCube,
    rho: f64,
) -> Result<HsiCube> {
    if !(rho > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "penalty must be positive, got {rho}"
        )));
    }
    let n = x_tilde.len();
    if n > DENSE_ORACLE_MAX_UNKNOWNS {
        return Err(CoreError::DenseSizeExceeded {
            unknowns: n,
            max: DENSE_ORACLE_MAX_UNKNOWNS,
        });
    }
    let (rows, cols, bands) = x_tilde.dims();
    let m = y.len();

    // materialize D by probing with basis cubes
    let mut d = DMatrix::<f64>::zeros(m, n);
    let mut basis = HsiCube::zeros(rows, cols, bands);
    for j in 0..n {
        basis.as_mut_slice()[j] = 1.0;
        let col = op.apply(&basis)?;
        if col.len() != m {
            return Err(CoreError::DimMismatch(format!(
                "operator output {} does not match measurement {}",
                col.len(),
                m
            )));
        }
        for (i, &v) in col.as_slice().iter().enumerate() {
            d[(i, j)] = v;
        }
        basis.as_mut_slice()[j] = 0.0;
    }

    let mut a = d.transpose() * &d;
    for i in 0..n {
        a[(i, i)] += rho;
    }
    let yv = DVector::from_column_slice(y.as_slice());
    let xt = DVector::from_column_slice(x_tilde.as_slice());
    let rhs = d.transpose() * yv + rho * xt;
    let chol = Cholesky::new(a).ok_or_else(|| CoreError::InvalidArgument(
        "normal equations not positive definite".into(),
    ))?;
    let x = chol.solve(&rhs);
    let out = HsiCube::from_vec(rows, cols, bands, x.as_slice().to_vec())?;
    out.ensure_finite("dense data update")?;
    Ok(out)
}

/// Place a blur kernel (anchored at its center) on the periodic plane and
/// return its spectrum.
fn blur_spectrum(blur: &Array2<f64>, rows: usize, cols: usize) -> Array2<Complex64> {
    let (kh, kw) = blur.dim();
    let (ar, ac) = (kh / 2, kw / 2);
    let mut img = Array2::<f64>::zeros((rows, cols));
    for j in 0..kh {
        for i in 0..kw {
            let r = (j as isize - ar as isize).rem_euclid(rows as isize) as usize;
            let c = (i as isize - ac as isize).rem_euclid(cols as isize) as usize;
            img[(r, c)] += blur[(j, i)];
        }
    }
    fft2_band(&img)
}

/// Fast update for the blur-then-downsample operator, band by band.
///
/// With G = S H and b = Gᵀy + rho x̃ the solution is
/// x = b/rho - Gᵀ F⁻¹{ F(G b) / (psi + rho) } / rho, where psi is the
/// spectrum of the subsampled blur autocorrelation (the eigenvalues of
/// G Gᵀ on the coarse grid).
pub fn x_update_sr(op: &TaskOperator, y: &HsiCube, x_tilde: &HsiCube, rho: f64) -> Result<HsiCube> {
    let (blur, factor) = match op {
        TaskOperator::SuperRes { blur, factor } => (blur, *factor),
        _ => {
            return Err(CoreError::InvalidArgument(
                "x_update_sr needs a blur-downsample operator".into(),
            ))
        }
    };
    if !(rho > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "penalty must be positive, got {rho}"
        )));
    }
    let (rows, cols, bands) = x_tilde.dims();
    if rows % factor != 0 || cols % factor != 0 {
        return Err(CoreError::DimMismatch(format!(
            "factor {factor} does not divide {rows}x{cols}"
        )));
    }
    let (ry, cy) = (rows / factor, cols / factor);
    if y.dims() != (ry, cy, bands) {
        return Err(CoreError::DimMismatch(format!(
            "measurement {:?}, expected ({ry}, {cy}, {bands})",
            y.dims()
        )));
    }

    let h = blur_spectrum(blur, rows, cols);
    let h_conj = h.mapv(|v| v.conj());
    // autocorrelation kernel of the blur, subsampled to the coarse grid
    let auto = ifft2_band_real(&h.mapv(|v| Complex64::new(v.norm_sqr(), 0.0)));
    let h0 = Array2::from_shape_fn((ry, cy), |(r, c)| auto[(r * factor, c * factor)]);
    let psi = fft2_band(&h0);

    let inv_rho = 1.0 / rho;
    let mut out = HsiCube::zeros(rows, cols, bands);
    for band in 0..bands {
        let y_b = y.data().index_axis(ndarray::Axis(0), band);
        let xt_b = x_tilde.data().index_axis(ndarray::Axis(0), band);

        // b = Gᵀ y + rho x̃ (upsample with zeros, blur adjoint)
        let mut up = Array2::<f64>::zeros((rows, cols));
        for r in 0..ry {
            for c in 0..cy {
                up[(r * factor, c * factor)] = y_b[(r, c)];
            }
        }
        let gty = {
            let spec = fft2_band(&up);
            ifft2_band_real(&Array2::from_shape_fn((rows, cols), |i| spec[i] * h_conj[i]))
        };
        let b_full = Array2::from_shape_fn((rows, cols), |i| gty[i] + rho * xt_b[i]);

        // G b: blur then subsample
        let blurred = {
            let spec = fft2_band(&b_full);
            ifft2_band_real(&Array2::from_shape_fn((rows, cols), |i| spec[i] * h[i]))
        };
        let gb = Array2::from_shape_fn((ry, cy), |(r, c)| blurred[(r * factor, c * factor)]);

        // coarse-grid division by (psi + rho)
        let t = {
            let spec = fft2_band(&gb);
            ifft2_band_real(&Array2::from_shape_fn((ry, cy), |i| {
                // psi is real and non-negative for an autocorrelation
                spec[i] / (psi[i].re + rho)
            }))
        };

        // Gᵀ t back to the fine grid
        let mut up_t = Array2::<f64>::zeros((rows, cols));
        for r in 0..ry {
            for c in 0..cy {
                up_t[(r * factor, c * factor)] = t[(r, c)];
            }
        }
        let gt_t = {
            let spec = fft2_band(&up_t);
            ifft2_band_real(&Array2::from_shape_fn((rows, cols), |i| spec[i] * h_conj[i]))
        };

        let mut out_b = out.data_mut().index_axis_mut(ndarray::Axis(0), band);
        for r in 0..rows {
            for c in 0..cols {
                out_b[(r, c)] = inv_rho * b_full[(r, c)] - inv_rho * gt_t[(r, c)];
            }
        }
    }
    out.ensure_finite("sr data update")?;
    Ok(out)
}

/// Fast update for snapshot sensing using the diagonal measurement Gram:
/// x = x̃ + Φᵀ[(y - Φx̃) / (rho + psi)].
pub fn x_update_cs(op: &TaskOperator, y: &HsiCube, x_tilde: &HsiCube, rho: f64) -> Result<HsiCube> {
    let psi = match op {
        TaskOperator::Sensing { psi, .. } => psi,
        _ => {
            return Err(CoreError::InvalidArgument(
                "x_update_cs needs a sensing operator".into(),
            ))
        }
    };
    if !(rho > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "penalty must be positive, got {rho}"
        )));
    }
    let residual = y.sub(&op.apply(x_tilde)?)?;
    let mut scaled = residual;
    {
        let plane = scaled.data_mut().index_axis_mut(ndarray::Axis(0), 0);
        for (v, &p) in plane.into_iter().zip(psi.iter()) {
            let denom = rho + p;
            if denom == 0.0 {
                return Err(CoreError::InvalidArgument(
                    "vanishing denominator in sensing update".into(),
                ));
            }
            *v /= denom;
        }
    }
    let out = x_tilde.add(&op.apply_adjoint(&scaled)?)?;
    out.ensure_finite("cs data update")?;
    Ok(out)
}

/// Fast update for masking: x_i = (s_i y_i + rho x̃_i) / (s_i + rho).
pub fn x_update_inpaint(
    op: &TaskOperator,
    y: &HsiCube,
    x_tilde: &HsiCube,
    rho: f64,
) -> Result<HsiCube> {
    let mask = match op {
        TaskOperator::Mask { mask } => mask,
        _ => {
            return Err(CoreError::InvalidArgument(
                "x_update_inpaint needs a masking operator".into(),
            ))
        }
    };
    if !(rho > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "penalty must be positive, got {rho}"
        )));
    }
    if mask.dims() != x_tilde.dims() || y.dims() != x_tilde.dims() {
        return Err(CoreError::DimMismatch(format!(
            "mask {:?} / y {:?} / x {:?}",
            mask.dims(),
            y.dims(),
            x_tilde.dims()
        )));
    }
    let mut out = HsiCube::zeros(x_tilde.rows(), x_tilde.cols(), x_tilde.bands());
    let (ms, ys, xs, os) = (
        mask.as_slice(),
        y.as_slice(),
        x_tilde.as_slice(),
        out.as_mut_slice(),
    );
    for i in 0..os.len() {
        os[i] = (ms[i] * ys[i] + rho * xs[i]) / (ms[i] + rho);
    }
    out.ensure_finite("inpaint data update")?;
    Ok(out)
}

/// Dispatch to the operator's fast update.
pub fn x_update(op: &TaskOperator, y: &HsiCube, x_tilde: &HsiCube, rho: f64) -> Result<HsiCube> {
    match op {
        TaskOperator::SuperRes { .. } => x_update_sr(op, y, x_tilde, rho),
        TaskOperator::Sensing { .. } => x_update_cs(op, y, x_tilde, rho),
        TaskOperator::Mask { .. } => x_update_inpaint(op, y, x_tilde, rho),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{delta_kernel2, gaussian_kernel2, random_mask};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HsiCube::from_fn(rows, cols, bands, |_, _, _| rng.random_range(0.0..1.0))
    }

    fn max_rel(a: &HsiCube, b: &HsiCube) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn oracle_identity_operator_averages() {
        // D = I (all-ones mask), rho = 1: x = (y + x̃) / 2
        let op = TaskOperator::inpaint(HsiCube::from_fn(3, 3, 2, |_, _, _| 1.0)).unwrap();
        let y = random_cube(3, 3, 2, 1);
        let xt = random_cube(3, 3, 2, 2);
        let x = x_update_dense_oracle(&op, &y, &xt, 1.0).unwrap();
        let expect = y.add(&xt).unwrap().scale(0.5);
        assert!(max_rel(&x, &expect) <= 1e-12);
    }

    #[test]
    fn oracle_zero_operator_returns_prior_point() {
        // D = 0 (all-zero mask): x = x̃
        let op = TaskOperator::inpaint(HsiCube::zeros(3, 3, 2)).unwrap();
        let y = HsiCube::zeros(3, 3, 2);
        let xt = random_cube(3, 3, 2, 3);
        let x = x_update_dense_oracle(&op, &y, &xt, 2.0).unwrap();
        assert!(max_rel(&x, &xt) <= 1e-12);
    }

    #[test]
    fn oracle_satisfies_normal_equations() {
        let op = TaskOperator::cassi(4, 4, 3, 4);
        let xt = random_cube(4, 4, 3, 5);
        let y = op.apply(&random_cube(4, 4, 3, 6)).unwrap();
        let rho = 0.7;
        let x = x_update_dense_oracle(&op, &y, &xt, rho).unwrap();
        // residual (DᵀD + rho I)x - (Dᵀy + rho x̃)
        let lhs = op
            .apply_adjoint(&op.apply(&x).unwrap())
            .unwrap()
            .add(&x.scale(rho))
            .unwrap();
        let rhs = op.apply_adjoint(&y).unwrap().add(&xt.scale(rho)).unwrap();
        let res = lhs.sub(&rhs).unwrap().l2_norm();
        assert!(res <= 1e-10, "normal equation residual {res}");
    }

    #[test]
    fn oracle_guards_problem_size() {
        let op = TaskOperator::inpaint(HsiCube::from_fn(40, 40, 3, |_, _, _| 1.0)).unwrap();
        let y = HsiCube::zeros(40, 40, 3);
        assert!(matches!(
            x_update_dense_oracle(&op, &y, &y, 1.0),
            Err(CoreError::DenseSizeExceeded { .. })
        ));
    }

    #[test]
    fn sr_factor_one_delta_blur_is_pointwise_average() {
        let op = TaskOperator::super_res(delta_kernel2(), 1).unwrap();
        let y = random_cube(6, 6, 2, 7);
        let xt = random_cube(6, 6, 2, 8);
        let rho = 0.9;
        let x = x_update_sr(&op, &y, &xt, rho).unwrap();
        let expect = y.add(&xt.scale(rho)).unwrap().scale(1.0 / (1.0 + rho));
        assert!(max_rel(&x, &expect) <= 1e-10);
    }

    #[test]
    fn sr_matches_dense_oracle() {
        let op = TaskOperator::super_res(gaussian_kernel2(3, 1.2), 2).unwrap();
        let xt = random_cube(8, 8, 2, 9);
        let y = random_cube(4, 4, 2, 10);
        for rho in [0.05, 1.0, 40.0] {
            let fast = x_update_sr(&op, &y, &xt, rho).unwrap();
            let slow = x_update_dense_oracle(&op, &y, &xt, rho).unwrap();
            assert!(
                max_rel(&fast, &slow) <= 1e-8,
                "rho {rho}: rel {}",
                max_rel(&fast, &slow)
            );
        }
    }

    #[test]
    fn sr_large_penalty_returns_prior_point() {
        let op = TaskOperator::super_res(gaussian_kernel2(3, 1.0), 2).unwrap();
        let xt = random_cube(8, 8, 2, 11);
        let y = random_cube(4, 4, 2, 12);
        let x = x_update_sr(&op, &y, &xt, 1e8).unwrap();
        assert!(max_rel(&x, &xt) <= 1e-6);
    }

    #[test]
    fn cs_identity_sensing_single_band() {
        // one band, all-ones mask, zero shift: psi == 1, y=2, x̃=0, rho=1 -> x=1
        let masks = ndarray::Array3::from_elem((1, 3, 3), 1.0);
        let op = TaskOperator::sensing(masks, vec![(0, 0)]).unwrap();
        let y = HsiCube::from_fn(3, 3, 1, |_, _, _| 2.0);
        let xt = HsiCube::zeros(3, 3, 1);
        let x = x_update_cs(&op, &y, &xt, 1.0).unwrap();
        assert!(x.as_slice().iter().all(|&v| (v - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn cs_matches_dense_oracle() {
        let op = TaskOperator::cassi(4, 4, 3, 13);
        let xt = random_cube(4, 4, 3, 14);
        let y = op.apply(&random_cube(4, 4, 3, 15)).unwrap();
        for rho in [0.1, 1.0, 25.0] {
            let fast = x_update_cs(&op, &y, &xt, rho).unwrap();
            let slow = x_update_dense_oracle(&op, &y, &xt, rho).unwrap();
            assert!(
                max_rel(&fast, &slow) <= 1e-8,
                "rho {rho}: rel {}",
                max_rel(&fast, &slow)
            );
        }
    }

    #[test]
    fn cs_consistent_measurement_is_fixed_point() {
        let op = TaskOperator::cassi(4, 4, 3, 16);
        let xt = random_cube(4, 4, 3, 17);
        let y = op.apply(&xt).unwrap();
        let x = x_update_cs(&op, &y, &xt, 2.0).unwrap();
        assert_eq!(x, xt); // zero residual leaves x̃ untouched bitwise
    }

    #[test]
    fn inpaint_update_observed_and_missing() {
        let mask = HsiCube::from_fn(2, 2, 1, |_, r, c| if (r + c) % 2 == 0 { 1.0 } else { 0.0 });
        let op = TaskOperator::inpaint(mask).unwrap();
        let y = HsiCube::from_fn(2, 2, 1, |_, _, _| 0.8);
        let xt = HsiCube::from_fn(2, 2, 1, |_, _, _| 0.2);
        let x = x_update_inpaint(&op, &y, &xt, 1.0).unwrap();
        assert!((x.get(0, 0, 0) - 0.5).abs() <= 1e-15); // observed: (y + x̃)/2
        assert!((x.get(0, 0, 1) - 0.2).abs() <= 1e-15); // missing: x̃
    }

    #[test]
    fn inpaint_matches_dense_oracle() {
        let mask = random_mask(8, 8, 3, 0.5, 18);
        let op = TaskOperator::inpaint(mask).unwrap();
        let y = random_cube(8, 8, 3, 19);
        let xt = random_cube(8, 8, 3, 20);
        for rho in [0.2, 1.0, 10.0] {
            let fast = x_update_inpaint(&op, &y, &xt, rho).unwrap();
            let slow = x_update_dense_oracle(&op, &y, &xt, rho).unwrap();
            assert!(
                max_rel(&fast, &slow) <= 1e-12,
                "rho {rho}: rel {}",
                max_rel(&fast, &slow)
            );
        }
    }

    #[test]
    fn nonpositive_penalty_rejected() {
        let op = TaskOperator::inpaint(HsiCube::from_fn(2, 2, 1, |_, _, _| 1.0)).unwrap();
        let y = HsiCube::zeros(2, 2, 1);
        assert!(x_update(&op, &y, &y, 0.0).is_err());
        assert!(x_update_dense_oracle(&op, &y, &y, -1.0).is_err());
    }
}

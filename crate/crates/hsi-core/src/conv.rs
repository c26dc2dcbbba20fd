//! 3D convolution and its exact adjoint.
//!
//! `conv3d` is the direct zero-padded convolution; `conv3d_transposed` is the
//! exact adjoint of its linear part with the same kernel/stride, so
//! `<conv3d(a), b> == <a, conv3d_transposed(b)>` whenever the bias is empty.
//! Both parallelize over output channels; every output value is produced by
//! exactly one thread with a fixed inner summation order, so results are
//! bit-reproducible for any thread count.

use ndarray::{Array5, Axis};
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::feature::{FeatureTensor, Kernel3d, Padding};

/// ceil(a / b) for b > 0, correct for negative a.
fn ceil_div(a: isize, b: isize) -> isize {
    (a + b - 1).div_euclid(b)
}

/// Output extent of a strided zero-padded convolution along one axis.
fn conv_extent(n: usize, k: usize, stride: usize, padding: Padding) -> Result<usize> {
    match padding {
        Padding::Same => {
            if n % stride != 0 {
                return Err(CoreError::DimMismatch(format!(
                    "stride {stride} does not divide extent {n}"
                )));
            }
            Ok(n / stride)
        }
        Padding::Valid => {
            if n < k {
                return Err(CoreError::DimMismatch(format!(
                    "extent {n} smaller than kernel {k}"
                )));
            }
            if (n - k) % stride != 0 {
                return Err(CoreError::DimMismatch(format!(
                    "stride {stride} does not divide extent {n} - kernel {k}"
                )));
            }
            Ok((n - k) / stride + 1)
        }
    }
}

/// Output extent of the transposed convolution along one axis.
fn transposed_extent(n: usize, k: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => n * stride,
        Padding::Valid => (n - 1) * stride + k,
    }
}

fn check_conv_input(input: &FeatureTensor, kernel: &Kernel3d) -> Result<()> {
    if input.channels() != kernel.in_channels {
        return Err(CoreError::DimMismatch(format!(
            "conv3d: input has {} channels, kernel expects {}",
            input.channels(),
            kernel.in_channels
        )));
    }
    Ok(())
}

fn check_transposed_input(input: &FeatureTensor, kernel: &Kernel3d) -> Result<()> {
    if input.channels() != kernel.out_channels {
        return Err(CoreError::DimMismatch(format!(
            "conv3d_transposed: input has {} channels, kernel maps {} back to {}",
            input.channels(),
            kernel.out_channels,
            kernel.in_channels
        )));
    }
    Ok(())
}

/// Strided zero-padded 3D convolution plus per-output-channel bias.
pub fn conv3d(input: &FeatureTensor, kernel: &Kernel3d) -> Result<FeatureTensor> {
    if !kernel.bias.is_empty() && kernel.bias.len() != kernel.out_channels {
        return Err(CoreError::DimMismatch(format!(
            "conv3d bias length {} != out_channels {}",
            kernel.bias.len(),
            kernel.out_channels
        )));
    }
    conv3d_with_bias(input, kernel, !kernel.bias.is_empty())
}

/// Convolution without the bias term (the pure linear map).
pub(crate) fn conv3d_linear(input: &FeatureTensor, kernel: &Kernel3d) -> Result<FeatureTensor> {
    conv3d_with_bias(input, kernel, false)
}

fn conv3d_with_bias(
    input: &FeatureTensor,
    kernel: &Kernel3d,
    apply_bias: bool,
) -> Result<FeatureTensor> {
    check_conv_input(input, kernel)?;
    let (_, b_in, m_in, n_in) = input.dims();
    let (kd, kh, kw) = kernel.dims;
    let (sd, sh, sw) = kernel.stride;
    let b_out = conv_extent(b_in, kd, sd, kernel.padding)?;
    let m_out = conv_extent(m_in, kh, sh, kernel.padding)?;
    let n_out = conv_extent(n_in, kw, sw, kernel.padding)?;
    let (pd, ph, pw) = kernel.pad_amounts();

    let mut out = FeatureTensor::zeros(kernel.out_channels, b_out, m_out, n_out);
    let in_data = input.data();
    let weights = &kernel.weights;

    out.data_mut()
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(oc, mut out_ch)| {
            if apply_bias {
                out_ch.fill(kernel.bias[oc]);
            }
            for ic in 0..kernel.in_channels {
                for dz in 0..kd {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let w = weights[(oc, ic, dz, dy, dx)];
                            let shift_b = dz as isize - pd as isize;
                            let shift_r = dy as isize - ph as isize;
                            let shift_c = dx as isize - pw as isize;
                            let od_lo = ceil_div(-shift_b, sd as isize).max(0) as usize;
                            let od_hi =
                                (ceil_div(b_in as isize - shift_b, sd as isize).max(0) as usize)
                                    .min(b_out);
                            let oh_lo = ceil_div(-shift_r, sh as isize).max(0) as usize;
                            let oh_hi =
                                (ceil_div(m_in as isize - shift_r, sh as isize).max(0) as usize)
                                    .min(m_out);
                            let ow_lo = ceil_div(-shift_c, sw as isize).max(0) as usize;
                            let ow_hi =
                                (ceil_div(n_in as isize - shift_c, sw as isize).max(0) as usize)
                                    .min(n_out);
                            if od_lo >= od_hi || oh_lo >= oh_hi || ow_lo >= ow_hi {
                                continue;
                            }
                            for od in od_lo..od_hi {
                                let id = (od * sd) as isize + shift_b;
                                for oh in oh_lo..oh_hi {
                                    let ih = (oh * sh) as isize + shift_r;
                                    let in_row =
                                        in_data.slice(ndarray::s![ic, id as usize, ih as usize, ..]);
                                    let in_row = in_row.as_slice().expect("contiguous row");
                                    let mut out_row =
                                        out_ch.slice_mut(ndarray::s![od, oh, ow_lo..ow_hi]);
                                    let out_row =
                                        out_row.as_slice_mut().expect("contiguous row");
                                    if sw == 1 {
                                        let base = (ow_lo as isize + shift_c) as usize;
                                        let len = out_row.len();
                                        for (o, &x) in
                                            out_row.iter_mut().zip(&in_row[base..base + len])
                                        {
                                            *o += w * x;
                                        }
                                    } else {
                                        for (i, o) in out_row.iter_mut().enumerate() {
                                            let iw = ((ow_lo + i) * sw) as isize + shift_c;
                                            *o += w * in_row[iw as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Exact adjoint of [`conv3d`]'s linear part, plus a per-output-channel bias
/// when the kernel carries one sized for the transposed output side.
///
/// Maps `out_channels` input channels back to `in_channels` output channels;
/// spatial/band extents grow by the stride ("same") or to `(n-1)*s + k`
/// ("valid").
pub fn conv3d_transposed(input: &FeatureTensor, kernel: &Kernel3d) -> Result<FeatureTensor> {
    if !kernel.bias.is_empty() && kernel.bias.len() != kernel.in_channels {
        return Err(CoreError::DimMismatch(format!(
            "conv3d_transposed bias length {} != destination channels {}",
            kernel.bias.len(),
            kernel.in_channels
        )));
    }
    conv3d_transposed_with_bias(input, kernel, !kernel.bias.is_empty())
}

/// Transposed convolution without the bias term.
pub(crate) fn conv3d_transposed_linear(
    input: &FeatureTensor,
    kernel: &Kernel3d,
) -> Result<FeatureTensor> {
    conv3d_transposed_with_bias(input, kernel, false)
}

fn conv3d_transposed_with_bias(
    input: &FeatureTensor,
    kernel: &Kernel3d,
    apply_bias: bool,
) -> Result<FeatureTensor> {
    check_transposed_input(input, kernel)?;
    let (_, b_in, m_in, n_in) = input.dims();
    let (kd, kh, kw) = kernel.dims;
    let (sd, sh, sw) = kernel.stride;
    let b_out = transposed_extent(b_in, kd, sd, kernel.padding);
    let m_out = transposed_extent(m_in, kh, sh, kernel.padding);
    let n_out = transposed_extent(n_in, kw, sw, kernel.padding);
    let (pd, ph, pw) = kernel.pad_amounts();

    let mut out = FeatureTensor::zeros(kernel.in_channels, b_out, m_out, n_out);
    let in_data = input.data();
    let weights = &kernel.weights;

    out.data_mut()
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(dst, mut out_ch)| {
            if apply_bias {
                out_ch.fill(kernel.bias[dst]);
            }
            for src in 0..kernel.out_channels {
                for dz in 0..kd {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let w = weights[(src, dst, dz, dy, dx)];
                            let shift_b = dz as isize - pd as isize;
                            let shift_r = dy as isize - ph as isize;
                            let shift_c = dx as isize - pw as isize;
                            // input index q scatters to output q*s + shift
                            let q_b_lo = ceil_div(-shift_b, sd as isize).max(0) as usize;
                            let q_b_hi = (ceil_div(b_out as isize - shift_b, sd as isize).max(0)
                                as usize)
                                .min(b_in);
                            let q_r_lo = ceil_div(-shift_r, sh as isize).max(0) as usize;
                            let q_r_hi = (ceil_div(m_out as isize - shift_r, sh as isize).max(0)
                                as usize)
                                .min(m_in);
                            let q_c_lo = ceil_div(-shift_c, sw as isize).max(0) as usize;
                            let q_c_hi = (ceil_div(n_out as isize - shift_c, sw as isize).max(0)
                                as usize)
                                .min(n_in);
                            if q_b_lo >= q_b_hi || q_r_lo >= q_r_hi || q_c_lo >= q_c_hi {
                                continue;
                            }
                            for qb in q_b_lo..q_b_hi {
                                let ob = (qb * sd) as isize + shift_b;
                                for qr in q_r_lo..q_r_hi {
                                    let or = (qr * sh) as isize + shift_r;
                                    let in_row = in_data.slice(ndarray::s![src, qb, qr, q_c_lo..q_c_hi]);
                                    let in_row = in_row.as_slice().expect("contiguous row");
                                    let mut out_row =
                                        out_ch.slice_mut(ndarray::s![ob as usize, or as usize, ..]);
                                    let out_row = out_row.as_slice_mut().expect("contiguous row");
                                    if sw == 1 {
                                        let base = (q_c_lo as isize + shift_c) as usize;
                                        for (o, &x) in out_row[base..base + in_row.len()]
                                            .iter_mut()
                                            .zip(in_row)
                                        {
                                            *o += w * x;
                                        }
                                    } else {
                                        for (i, &x) in in_row.iter().enumerate() {
                                            let oc_idx = ((q_c_lo + i) * sw) as isize + shift_c;
                                            out_row[oc_idx as usize] += w * x;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Gradient of `conv3d(x, kernel)` with respect to the kernel weights, given
/// the upstream gradient `g` on the convolution output.
///
/// Also serves the transposed op with the roles of `x` and `g` swapped:
/// `x` = upstream gradient on the transposed output, `g` = transposed input.
pub(crate) fn conv3d_weight_grad(
    x: &FeatureTensor,
    g: &FeatureTensor,
    kernel: &Kernel3d,
) -> Result<Array5<f64>> {
    if x.channels() != kernel.in_channels || g.channels() != kernel.out_channels {
        return Err(CoreError::DimMismatch(format!(
            "weight grad: x has {} channels (want {}), g has {} (want {})",
            x.channels(),
            kernel.in_channels,
            g.channels(),
            kernel.out_channels
        )));
    }
    let (_, b_in, m_in, n_in) = x.dims();
    let (_, b_out, m_out, n_out) = g.dims();
    let (kd, kh, kw) = kernel.dims;
    let (sd, sh, sw) = kernel.stride;
    let (pd, ph, pw) = kernel.pad_amounts();

    let mut gw = Array5::<f64>::zeros((kernel.out_channels, kernel.in_channels, kd, kh, kw));
    let x_data = x.data();
    let g_data = g.data();

    gw.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(oc, mut gw_oc)| {
            for ic in 0..kernel.in_channels {
                for dz in 0..kd {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let shift_b = dz as isize - pd as isize;
                            let shift_r = dy as isize - ph as isize;
                            let shift_c = dx as isize - pw as isize;
                            let od_lo = ceil_div(-shift_b, sd as isize).max(0) as usize;
                            let od_hi =
                                (ceil_div(b_in as isize - shift_b, sd as isize).max(0) as usize)
                                    .min(b_out);
                            let oh_lo = ceil_div(-shift_r, sh as isize).max(0) as usize;
                            let oh_hi =
                                (ceil_div(m_in as isize - shift_r, sh as isize).max(0) as usize)
                                    .min(m_out);
                            let ow_lo = ceil_div(-shift_c, sw as isize).max(0) as usize;
                            let ow_hi =
                                (ceil_div(n_in as isize - shift_c, sw as isize).max(0) as usize)
                                    .min(n_out);
                            if od_lo >= od_hi || oh_lo >= oh_hi || ow_lo >= ow_hi {
                                continue;
                            }
                            let mut acc = 0.0;
                            for od in od_lo..od_hi {
                                let id = ((od * sd) as isize + shift_b) as usize;
                                for oh in oh_lo..oh_hi {
                                    let ih = ((oh * sh) as isize + shift_r) as usize;
                                    let g_row = g_data.slice(ndarray::s![oc, od, oh, ow_lo..ow_hi]);
                                    let g_row = g_row.as_slice().expect("contiguous row");
                                    let x_row = x_data.slice(ndarray::s![ic, id, ih, ..]);
                                    let x_row = x_row.as_slice().expect("contiguous row");
                                    if sw == 1 {
                                        let base = (ow_lo as isize + shift_c) as usize;
                                        acc += g_row
                                            .iter()
                                            .zip(&x_row[base..base + g_row.len()])
                                            .map(|(a, b)| a * b)
                                            .sum::<f64>();
                                    } else {
                                        for (i, gv) in g_row.iter().enumerate() {
                                            let iw = (((ow_lo + i) * sw) as isize + shift_c) as usize;
                                            acc += gv * x_row[iw];
                                        }
                                    }
                                }
                            }
                            gw_oc[(ic, dz, dy, dx)] = acc;
                        }
                    }
                }
            }
        });
    Ok(gw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-nested-loop definition of the zero-padded convolution.
    /// Kept deliberately naive and independent of the implementation above.
    fn naive_conv3d(input: &FeatureTensor, kernel: &Kernel3d) -> FeatureTensor {
        let (c_in, b_in, m_in, n_in) = input.dims();
        let (kd, kh, kw) = kernel.dims;
        let (sd, sh, sw) = kernel.stride;
        let (pd, ph, pw) = kernel.pad_amounts();
        let ext = |n: usize, k: usize, s: usize| match kernel.padding {
            Padding::Same => n / s,
            Padding::Valid => (n - k) / s + 1,
        };
        let (b_out, m_out, n_out) = (ext(b_in, kd, sd), ext(m_in, kh, sh), ext(n_in, kw, sw));
        let mut out = FeatureTensor::zeros(kernel.out_channels, b_out, m_out, n_out);
        for oc in 0..kernel.out_channels {
            for od in 0..b_out {
                for oh in 0..m_out {
                    for ow in 0..n_out {
                        let mut acc = if kernel.bias.is_empty() {
                            0.0
                        } else {
                            kernel.bias[oc]
                        };
                        for ic in 0..c_in {
                            for dz in 0..kd {
                                for dy in 0..kh {
                                    for dx in 0..kw {
                                        let ib = od as isize * sd as isize + dz as isize - pd as isize;
                                        let ir = oh as isize * sh as isize + dy as isize - ph as isize;
                                        let icl = ow as isize * sw as isize + dx as isize - pw as isize;
                                        if ib < 0
                                            || ir < 0
                                            || icl < 0
                                            || ib >= b_in as isize
                                            || ir >= m_in as isize
                                            || icl >= n_in as isize
                                        {
                                            continue;
                                        }
                                        acc += kernel.weights[(oc, ic, dz, dy, dx)]
                                            * input.get(ic, ib as usize, ir as usize, icl as usize);
                                    }
                                }
                            }
                        }
                        out.set(oc, od, oh, ow, acc);
                    }
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, b: usize, m: usize, n: usize) -> FeatureTensor {
        FeatureTensor::from_fn(c, b, m, n, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_kernel(
        rng: &mut ChaCha8Rng,
        out_c: usize,
        in_c: usize,
        dims: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: Padding,
        with_bias: bool,
    ) -> Kernel3d {
        let weights = Array5::from_shape_fn((out_c, in_c, dims.0, dims.1, dims.2), |_| {
            rng.random_range(-1.0..1.0)
        });
        let bias = if with_bias {
            Array1::from_shape_fn(out_c, |_| rng.random_range(-1.0..1.0))
        } else {
            Array1::zeros(0)
        };
        Kernel3d::new(out_c, in_c, dims, stride, padding, weights, bias).unwrap()
    }

    fn max_rel_err(a: &FeatureTensor, b: &FeatureTensor) -> f64 {
        assert_eq!(a.dims(), b.dims());
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, 1, 3, 4, 5);
        let mut weights = Array5::zeros((1, 1, 1, 1, 1));
        weights[(0, 0, 0, 0, 0)] = 1.0;
        let kernel = Kernel3d::new(
            1,
            1,
            (1, 1, 1),
            (1, 1, 1),
            Padding::Same,
            weights,
            Array1::zeros(1),
        )
        .unwrap();
        let out = conv3d(&input, &kernel).unwrap();
        assert_eq!(out, input);
        // The transposed op with the same kernel is the identity too.
        let kernel_nobias = Kernel3d {
            bias: Array1::zeros(0),
            ..kernel
        };
        let back = conv3d_transposed(&input, &kernel_nobias).unwrap();
        assert_eq!(back, input);
    }

    #[test]
    fn all_ones_kernel_sums_constant_neighborhood() {
        let c = 0.7;
        let input = FeatureTensor::from_fn(1, 6, 6, 6, |_, _, _, _| c);
        let kernel = Kernel3d::new(
            1,
            1,
            (3, 3, 3),
            (1, 1, 1),
            Padding::Same,
            Array5::ones((1, 1, 3, 3, 3)),
            Array1::zeros(1),
        )
        .unwrap();
        let out = conv3d(&input, &kernel).unwrap();
        // interior voxels see the full 27-voxel neighborhood
        for b in 1..5 {
            for r in 1..5 {
                for cl in 1..5 {
                    assert!((out.get(0, b, r, cl) - 27.0 * c).abs() < 1e-12);
                }
            }
        }
        // a corner sees only the 2x2x2 corner of the neighborhood
        assert!((out.get(0, 0, 0, 0) - 8.0 * c).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_oracle_on_fixed_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random_tensor(&mut rng, 2, 5, 4, 4);
        let kernel = random_kernel(&mut rng, 3, 2, (3, 3, 3), (1, 1, 1), Padding::Same, true);
        let fast = conv3d(&input, &kernel).unwrap();
        let slow = naive_conv3d(&input, &kernel);
        assert!(max_rel_err(&fast, &slow) <= 1e-12);
    }

    #[test]
    fn matches_naive_oracle_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..60 {
            let stride2 = trial % 3 == 0;
            let padding = if trial % 4 == 0 {
                Padding::Valid
            } else {
                Padding::Same
            };
            let (kd, kh, kw) = (1 + 2 * rng.random_range(0..2usize), 3, 3);
            let stride = if stride2 { (1, 2, 2) } else { (1, 1, 1) };
            let b = rng.random_range(1..5usize);
            let (m, n) = if padding == Padding::Same {
                // extents divisible by the stride
                (
                    stride.1 * rng.random_range(1..4usize),
                    stride.2 * rng.random_range(1..4usize),
                )
            } else {
                let m = kh + stride.1 * rng.random_range(0..3usize);
                let n = kw + stride.2 * rng.random_range(0..3usize);
                (m, n)
            };
            let b = if padding == Padding::Valid { b.max(kd) } else { b };
            let c_in = rng.random_range(1..3usize);
            let c_out = rng.random_range(1..4usize);
            let input = random_tensor(&mut rng, c_in, b, m, n);
            let kernel = random_kernel(&mut rng, c_out, c_in, (kd, kh, kw), stride, padding, true);
            let fast = conv3d(&input, &kernel).unwrap();
            let slow = naive_conv3d(&input, &kernel);
            assert!(
                max_rel_err(&fast, &slow) <= 1e-12,
                "trial {trial}: rel err {}",
                max_rel_err(&fast, &slow)
            );
            assert!(fast.all_finite());
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        // <conv3d(a), b> == <a, conv3d_transposed(b)> for bias-free kernels
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..100 {
            let stride = if trial % 2 == 0 { (1, 1, 1) } else { (1, 2, 2) };
            let b = rng.random_range(1..4usize);
            let m = stride.1 * rng.random_range(1..4usize);
            let n = stride.2 * rng.random_range(1..4usize);
            let c_in = rng.random_range(1..3usize);
            let c_out = rng.random_range(1..3usize);
            let kernel = random_kernel(
                &mut rng,
                c_out,
                c_in,
                (3, 3, 3),
                stride,
                Padding::Same,
                false,
            );
            let a = random_tensor(&mut rng, c_in, b, m, n);
            let ka = conv3d(&a, &kernel).unwrap();
            let bt = random_tensor(&mut rng, c_out, ka.bands(), ka.rows(), ka.cols());
            let ktb = conv3d_transposed(&bt, &kernel).unwrap();
            assert_eq!(ktb.dims(), a.dims());
            let lhs: f64 = ka
                .as_slice()
                .iter()
                .zip(bt.as_slice())
                .map(|(x, y)| x * y)
                .sum();
            let rhs: f64 = a
                .as_slice()
                .iter()
                .zip(ktb.as_slice())
                .map(|(x, y)| x * y)
                .sum();
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(rel <= 1e-10, "trial {trial}: adjoint mismatch rel {rel}");
        }
    }

    #[test]
    fn stride2_upsampling_stamps_kernel_at_scaled_position() {
        // A delta input through the transposed stride-2 op reproduces the
        // kernel values around the scaled location.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = random_kernel(&mut rng, 1, 1, (1, 3, 3), (1, 2, 2), Padding::Same, false);
        let mut delta = FeatureTensor::zeros(1, 1, 3, 3);
        delta.set(0, 0, 1, 1, 1.0);
        let out = conv3d_transposed(&delta, &kernel).unwrap();
        assert_eq!(out.dims(), (1, 1, 6, 6));
        // naive scatter: out[1*2 + dy - 1, 1*2 + dx - 1] = w[dy, dx]
        let mut expect = FeatureTensor::zeros(1, 1, 6, 6);
        for dy in 0..3 {
            for dx in 0..3 {
                let r = 2 + dy as isize - 1;
                let c = 2 + dx as isize - 1;
                expect.set(0, 0, r as usize, c as usize, kernel.weights[(0, 0, 0, dy, dx)]);
            }
        }
        assert!(max_rel_err(&out, &expect) <= 1e-15);
    }

    #[test]
    fn weight_grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random_tensor(&mut rng, 2, 3, 4, 4);
        let mut kernel = random_kernel(&mut rng, 2, 2, (3, 3, 3), (1, 2, 2), Padding::Same, false);
        let g = random_tensor(&mut rng, 2, 3, 2, 2);
        let gw = conv3d_weight_grad(&input, &g, &kernel).unwrap();
        // loss = <conv(x), g>; check d loss / d w against central differences
        let h = 1e-6;
        for &idx in &[(0, 0, 0, 0, 0), (1, 1, 2, 2, 2), (0, 1, 1, 0, 2)] {
            let orig = kernel.weights[idx];
            kernel.weights[idx] = orig + h;
            let up: f64 = conv3d(&input, &kernel)
                .unwrap()
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, b)| a * b)
                .sum();
            kernel.weights[idx] = orig - h;
            let dn: f64 = conv3d(&input, &kernel)
                .unwrap()
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, b)| a * b)
                .sum();
            kernel.weights[idx] = orig;
            let numeric = (up - dn) / (2.0 * h);
            let analytic = gw[idx];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * analytic.abs().max(1.0),
                "dw mismatch at {idx:?}: {numeric} vs {analytic}"
            );
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let input = FeatureTensor::zeros(2, 2, 2, 2);
        let kernel = Kernel3d::zeros(1, 3, (1, 1, 1), (1, 1, 1), Padding::Same);
        assert!(matches!(
            conv3d(&input, &kernel),
            Err(CoreError::DimMismatch(_))
        ));
        assert!(matches!(
            conv3d_transposed(&input, &kernel),
            Err(CoreError::DimMismatch(_))
        ));
    }

    #[test]
    fn indivisible_stride_rejected() {
        let input = FeatureTensor::zeros(1, 2, 5, 4);
        let kernel = Kernel3d::zeros(1, 1, (1, 3, 3), (1, 2, 2), Padding::Same);
        assert!(conv3d(&input, &kernel).is_err());
    }
}

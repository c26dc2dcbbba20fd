//! Task-specific starting points for the iteration.
//!
//! Super-resolution starts from band-wise bicubic upsampling of the
//! measurement; inpainting from a nearest-observed fill (multi-source
//! breadth-first over the 4-neighborhood) followed by one 3x3 mean pass
//! over the filled-in pixels; snapshot sensing from the backprojection
//! normalized by the measurement Gram diagonal.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::cube::HsiCube;
use crate::degrade::TaskOperator;
use crate::error::{CoreError, Result};

/// Keys cubic convolution weight (a = -0.5), the classic bicubic kernel.
fn cubic_weight(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic upsampling of one plane by an integer factor (centers aligned,
/// edges clamped). Factor 1 reproduces the input exactly.
pub fn bicubic_upsample(plane: &Array2<f64>, factor: usize) -> Array2<f64> {
    let (rows, cols) = plane.dim();
    let (orows, ocols) = (rows * factor, cols * factor);
    Array2::from_shape_fn((orows, ocols), |(r, c)| {
        let sy = (r as f64 + 0.5) / factor as f64 - 0.5;
        let sx = (c as f64 + 0.5) / factor as f64 - 0.5;
        let y0 = sy.floor() as isize;
        let x0 = sx.floor() as isize;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for dy in -1..=2 {
            for dx in -1..=2 {
                let yy = y0 + dy;
                let xx = x0 + dx;
                let w = cubic_weight(sy - yy as f64) * cubic_weight(sx - xx as f64);
                let yy = yy.clamp(0, rows as isize - 1) as usize;
                let xx = xx.clamp(0, cols as isize - 1) as usize;
                acc += w * plane[(yy, xx)];
                wsum += w;
            }
        }
        acc / wsum
    })
}

fn init_super_res(y: &HsiCube, factor: usize) -> HsiCube {
    let (ry, cy, bands) = y.dims();
    let mut out = HsiCube::zeros(ry * factor, cy * factor, bands);
    for b in 0..bands {
        let plane = y.data().index_axis(ndarray::Axis(0), b).to_owned();
        let up = bicubic_upsample(&plane, factor);
        out.data_mut().index_axis_mut(ndarray::Axis(0), b).assign(&up);
    }
    out
}

fn init_inpaint(y: &HsiCube, mask: &HsiCube) -> Result<HsiCube> {
    if mask.dims() != y.dims() {
        return Err(CoreError::DimMismatch(format!(
            "mask {:?} vs observation {:?}",
            mask.dims(),
            y.dims()
        )));
    }
    let (rows, cols, bands) = y.dims();
    let observed_total: f64 = mask.as_slice().iter().sum();
    if observed_total == 0.0 {
        return Err(CoreError::EmptyObservation("mask keeps no voxels".into()));
    }
    let global_mean = {
        let sum: f64 = y
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .map(|(v, m)| v * m)
            .sum();
        sum / observed_total
    };

    let mut out = y.clone();
    let mut missing = vec![false; rows * cols];
    for b in 0..bands {
        // multi-source BFS from every observed pixel of this band
        let mut dist = vec![usize::MAX; rows * cols];
        let mut queue = VecDeque::new();
        for r in 0..rows {
            for c in 0..cols {
                let idx = r * cols + c;
                missing[idx] = mask.get(b, r, c) == 0.0;
                if !missing[idx] {
                    dist[idx] = 0;
                    queue.push_back(idx);
                }
            }
        }
        if queue.is_empty() {
            // fully missing band: fall back to the cube-wide observed mean
            for r in 0..rows {
                for c in 0..cols {
                    out.set(b, r, c, global_mean);
                }
            }
            continue;
        }
        while let Some(idx) = queue.pop_front() {
            let (r, c) = (idx / cols, idx % cols);
            let d = dist[idx];
            let neighbors = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in neighbors {
                if nr >= rows || nc >= cols {
                    continue;
                }
                let nidx = nr * cols + nc;
                if dist[nidx] == usize::MAX {
                    dist[nidx] = d + 1;
                    let v = out.get(b, r, c);
                    out.set(b, nr, nc, v);
                    queue.push_back(nidx);
                }
            }
        }
        // one 3x3 mean pass over the filled-in pixels only, so a fully
        // observed band is returned untouched
        let snapshot = out.data().index_axis(ndarray::Axis(0), b).to_owned();
        for r in 0..rows {
            for c in 0..cols {
                if !missing[r * cols + c] {
                    continue;
                }
                let mut acc = 0.0;
                let mut n = 0.0;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let rr = r as i64 + dr;
                        let cc = c as i64 + dc;
                        if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                            continue;
                        }
                        acc += snapshot[(rr as usize, cc as usize)];
                        n += 1.0;
                    }
                }
                out.set(b, r, c, acc / n);
            }
        }
    }
    Ok(out)
}

fn init_sensing(op: &TaskOperator, y: &HsiCube) -> Result<HsiCube> {
    let psi = op
        .gram_diagonal()
        .expect("sensing operator carries its Gram diagonal");
    if psi.iter().all(|&p| p == 0.0) {
        return Err(CoreError::EmptyObservation("all sensing masks are zero".into()));
    }
    // backprojection of the Gram-normalized measurement
    let mut normalized = y.clone();
    {
        let plane = normalized.data_mut().index_axis_mut(ndarray::Axis(0), 0);
        for (v, &p) in plane.into_iter().zip(psi.iter()) {
            *v = if p > 0.0 { *v / p } else { 0.0 };
        }
    }
    op.apply_adjoint(&normalized)
}

/// Task-specific starting cube for the iteration.
pub fn initialize(op: &TaskOperator, y: &HsiCube) -> Result<HsiCube> {
    if y.is_empty() {
        return Err(CoreError::EmptyObservation("empty measurement".into()));
    }
    let out = match op {
        TaskOperator::SuperRes { factor, .. } => init_super_res(y, *factor),
        TaskOperator::Mask { mask } => init_inpaint(y, mask)?,
        TaskOperator::Sensing { .. } => init_sensing(op, y)?,
    };
    out.ensure_finite("initialization")?;
    Ok(out)
}

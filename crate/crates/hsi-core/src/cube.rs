//! Dense hyperspectral cube storage.
//!
//! An [`HsiCube`] is an M×N×B volume stored band-major: B contiguous planes
//! of M×N values, row-major within a plane. Values are nominally in [0, 1]
//! after normalization, though intermediate solver iterates may exceed that
//! range. Band planes are contiguous because the recurrent denoiser sweeps
//! the band axis.

use ndarray::Array3;

use crate::error::{CoreError, Result};

/// A dense M (rows) × N (cols) × B (bands) real-valued cube.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    /// Shape (bands, rows, cols) so each band plane is contiguous.
    data: Array3<f64>,
}

impl HsiCube {
    /// All-zero cube.
    pub fn zeros(rows: usize, cols: usize, bands: usize) -> Self {
        Self {
            data: Array3::zeros((bands, rows, cols)),
        }
    }

    /// Build from a band-major value vector (`bands` planes of `rows`×`cols`).
    pub fn from_vec(rows: usize, cols: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols * bands {
            return Err(CoreError::DimMismatch(format!(
                "cube payload has {} values, expected {}x{}x{} = {}",
                values.len(),
                rows,
                cols,
                bands,
                rows * cols * bands
            )));
        }
        let data = Array3::from_shape_vec((bands, rows, cols), values)
            .map_err(|e| CoreError::DimMismatch(e.to_string()))?;
        Ok(Self { data })
    }

    /// Build by evaluating `f(band, row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        Self {
            data: Array3::from_shape_fn((bands, rows, cols), |(b, r, c)| f(b, r, c)),
        }
    }

    pub fn from_array(data: Array3<f64>) -> Self {
        Self { data }
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn bands(&self) -> usize {
        self.data.shape()[0]
    }

    /// (rows, cols, bands)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows(), self.cols(), self.bands())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Backing array with shape (bands, rows, cols).
    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band, row, col)]
    }

    pub fn set(&mut self, band: usize, row: usize, col: usize, value: f64) {
        self.data[(band, row, col)] = value;
    }

    /// Band-major flat view (band, then row, then col).
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("cube storage is contiguous")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data
            .as_slice_mut()
            .expect("cube storage is contiguous")
    }

    fn check_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(CoreError::DimMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other, "add")?;
        Ok(Self {
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other, "sub")?;
        Ok(Self {
            data: &self.data - &other.data,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            data: &self.data * factor,
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other, "hadamard")?;
        Ok(Self {
            data: &self.data * &other.data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.mapv(&f),
        }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_dims(other, "dot")?;
        Ok(self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Error if any value is NaN/Inf; `context` names the producing operation.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite {
                context: context.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_major_layout() {
        let cube = HsiCube::from_fn(2, 3, 2, |b, r, c| (b * 100 + r * 10 + c) as f64);
        // Flat order: band 0 rows, then band 1 rows.
        let flat = cube.as_slice();
        assert_eq!(flat[0], 0.0); // b0 r0 c0
        assert_eq!(flat[1], 1.0); // b0 r0 c1
        assert_eq!(flat[3], 10.0); // b0 r1 c0
        assert_eq!(flat[6], 100.0); // b1 r0 c0
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        let err = HsiCube::from_vec(2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, CoreError::DimMismatch(_)));
    }

    #[test]
    fn elementwise_ops() {
        let a = HsiCube::from_fn(2, 2, 1, |_, r, c| (r + c) as f64);
        let ones = HsiCube::from_fn(2, 2, 1, |_, _, _| 1.0);
        assert_eq!(a.hadamard(&ones).unwrap(), a);
        let sum = a.add(&a).unwrap();
        assert_eq!(sum.get(0, 1, 1), 4.0);
        assert_eq!(a.sub(&a).unwrap().l2_norm(), 0.0);
        assert_eq!(a.scale(2.0), sum);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = HsiCube::zeros(2, 2, 1);
        let b = HsiCube::zeros(2, 3, 1);
        assert!(a.add(&b).is_err());
        assert!(a.hadamard(&b).is_err());
        assert!(a.dot(&b).is_err());
    }

    #[test]
    fn finiteness_guard() {
        let mut a = HsiCube::zeros(2, 2, 1);
        assert!(a.ensure_finite("test").is_ok());
        a.set(0, 0, 0, f64::NAN);
        assert!(matches!(
            a.ensure_finite("test"),
            Err(CoreError::NonFinite { .. })
        ));
    }
}

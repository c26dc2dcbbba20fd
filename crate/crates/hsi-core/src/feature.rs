//! Feature tensors and 3D convolution kernels.
//!
//! A [`FeatureTensor`] is the C×B×M×N activation volume flowing through the
//! denoising network (channel-major, then band-major, row-major planes).
//! [`Kernel3d`] bundles the weights, bias, stride and padding of one 3D
//! convolution; the band axis is the kernel's depth axis.

use ndarray::{Array1, Array3, Array5};

use crate::cube::HsiCube;
use crate::error::{CoreError, Result};

/// Boundary handling for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of (k-1)/2 per side; requires odd kernel dims. Output
    /// extent is `input/stride` (stride must divide the input extent).
    Same,
    /// No padding; output extent is `(input - k)/stride + 1`.
    Valid,
}

/// A C (channels) × B (bands) × M (rows) × N (cols) activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// Shape (channels, bands, rows, cols).
    data: ndarray::Array4<f64>,
}

impl FeatureTensor {
    pub fn zeros(channels: usize, bands: usize, rows: usize, cols: usize) -> Self {
        Self {
            data: ndarray::Array4::zeros((channels, bands, rows, cols)),
        }
    }

    pub fn from_fn(
        channels: usize,
        bands: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        Self {
            data: ndarray::Array4::from_shape_fn((channels, bands, rows, cols), |(ch, b, r, c)| {
                f(ch, b, r, c)
            }),
        }
    }

    pub fn from_array(data: ndarray::Array4<f64>) -> Self {
        Self { data }
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn bands(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[3]
    }

    /// (channels, bands, rows, cols)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &ndarray::Array4<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut ndarray::Array4<f64> {
        &mut self.data
    }

    pub fn get(&self, ch: usize, band: usize, row: usize, col: usize) -> f64 {
        self.data[(ch, band, row, col)]
    }

    pub fn set(&mut self, ch: usize, band: usize, row: usize, col: usize, value: f64) {
        self.data[(ch, band, row, col)] = value;
    }

    /// Channel-major flat view.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("tensor storage is contiguous")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data
            .as_slice_mut()
            .expect("tensor storage is contiguous")
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

    /// Logistic function, elementwise. Output in (0, 1).
    pub fn sigmoid(&self) -> Self {
        Self {
            data: self.data.mapv(sigmoid),
        }
    }

    /// Hyperbolic tangent, elementwise. Output in (-1, 1).
    pub fn tanh(&self) -> Self {
        Self {
            data: self.data.mapv(f64::tanh),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.mapv(&f),
        }
    }

    /// Stack `other`'s channels after `self`'s. Band/spatial dims must match.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        let (_, b1, r1, c1) = self.dims();
        let (_, b2, r2, c2) = other.dims();
        if (b1, r1, c1) != (b2, r2, c2) {
            return Err(CoreError::DimMismatch(format!(
                "concat_channels: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let data = ndarray::concatenate(
            ndarray::Axis(0),
            &[self.data.view(), other.data.view()],
        )
        .map_err(|e| CoreError::DimMismatch(e.to_string()))?;
        Ok(Self { data })
    }

    /// Sub-range of channels `[start, start+count)` as a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.channels() {
            return Err(CoreError::DimMismatch(format!(
                "slice_channels: [{start}, {}) out of {} channels",
                start + count,
                self.channels()
            )));
        }
        Ok(Self {
            data: self
                .data
                .slice(ndarray::s![start..start + count, .., .., ..])
                .to_owned(),
        })
    }

    /// Zero-pad the band/spatial axes by the given amounts per side.
    pub fn pad(&self, band: usize, row: usize, col: usize) -> Self {
        let (ch, b, r, c) = self.dims();
        let mut out = Self::zeros(ch, b + 2 * band, r + 2 * row, c + 2 * col);
        out.data
            .slice_mut(ndarray::s![.., band..band + b, row..row + r, col..col + c])
            .assign(&self.data);
        out
    }

    /// Crop the band/spatial axes by the given amounts per side.
    pub fn crop(&self, band: usize, row: usize, col: usize) -> Result<Self> {
        let (_, b, r, c) = self.dims();
        if 2 * band >= b || 2 * row >= r || 2 * col >= c {
            return Err(CoreError::DimMismatch(format!(
                "crop of ({band},{row},{col}) per side exceeds dims {:?}",
                self.dims()
            )));
        }
        Ok(Self {
            data: self
                .data
                .slice(ndarray::s![.., band..b - band, row..r - row, col..c - col])
                .to_owned(),
        })
    }

    /// View a cube as a single-channel tensor.
    pub fn from_cube(cube: &HsiCube) -> Self {
        let (rows, cols, bands) = cube.dims();
        let mut out = Self::zeros(1, bands, rows, cols);
        out.data
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(cube.data());
        out
    }

    /// Collapse a single-channel tensor back to a cube.
    pub fn to_cube(&self) -> Result<HsiCube> {
        if self.channels() != 1 {
            return Err(CoreError::DimMismatch(format!(
                "to_cube requires 1 channel, got {}",
                self.channels()
            )));
        }
        let plane: Array3<f64> = self.data.index_axis(ndarray::Axis(0), 0).to_owned();
        Ok(HsiCube::from_array(plane))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights and bias of one 3D convolution (or its transpose).
///
/// Weights are laid out (out_channels, in_channels, kd, kh, kw) with the
/// band axis as depth. The bias belongs to the output side of whichever op
/// the kernel is applied with: length `out_channels` for the forward
/// convolution, `in_channels` for the transposed one, or empty for a pure
/// linear map (the form the adjoint identity is stated in).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3d {
    pub out_channels: usize,
    pub in_channels: usize,
    /// (kd, kh, kw) = (band, row, col) extents.
    pub dims: (usize, usize, usize),
    /// (sd, sh, sw) strides per axis.
    pub stride: (usize, usize, usize),
    pub padding: Padding,
    /// Shape (out_channels, in_channels, kd, kh, kw).
    pub weights: Array5<f64>,
    pub bias: Array1<f64>,
}

impl Kernel3d {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        dims: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: Padding,
        weights: Array5<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        let expected = [out_channels, in_channels, dims.0, dims.1, dims.2];
        if weights.shape() != expected {
            return Err(CoreError::DimMismatch(format!(
                "kernel weights shape {:?}, expected {:?}",
                weights.shape(),
                expected
            )));
        }
        if stride.0 == 0 || stride.1 == 0 || stride.2 == 0 {
            return Err(CoreError::InvalidArgument("zero stride".into()));
        }
        if padding == Padding::Same && (dims.0 % 2 == 0 || dims.1 % 2 == 0 || dims.2 % 2 == 0) {
            return Err(CoreError::InvalidArgument(format!(
                "same-size convolution needs odd kernel dims, got {dims:?}"
            )));
        }
        if !bias.is_empty() && bias.len() != out_channels && bias.len() != in_channels {
            return Err(CoreError::DimMismatch(format!(
                "bias length {} matches neither out ({out_channels}) nor in ({in_channels}) channels",
                bias.len()
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            dims,
            stride,
            padding,
            weights,
            bias,
        })
    }

    /// Zero-initialized kernel with a zero bias on the forward output side.
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        dims: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: Padding,
    ) -> Self {
        Self {
            out_channels,
            in_channels,
            dims,
            stride,
            padding,
            weights: Array5::zeros((out_channels, in_channels, dims.0, dims.1, dims.2)),
            bias: Array1::zeros(out_channels),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Zero padding per axis implied by the padding mode.
    pub fn pad_amounts(&self) -> (usize, usize, usize) {
        match self.padding {
            Padding::Same => ((self.dims.0 - 1) / 2, (self.dims.1 - 1) / 2, (self.dims.2 - 1) / 2),
            Padding::Valid => (0, 0, 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_tanh_fixed_points() {
        let t = FeatureTensor::zeros(1, 1, 2, 2);
        assert!(t.sigmoid().as_slice().iter().all(|&v| v == 0.5));
        assert!(t.tanh().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activation_ranges() {
        // Stay below tanh's f64 saturation point (~19) so strictness survives
        // rounding; that is also the regime trained weights operate in.
        let t = FeatureTensor::from_fn(1, 1, 1, 64, |_, _, _, c| (c as f64 - 32.0) * 0.5);
        assert!(t.sigmoid().as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(t.tanh().as_slice().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let a = FeatureTensor::from_fn(2, 2, 2, 2, |ch, b, r, c| (ch + b + r + c) as f64);
        let ones = FeatureTensor::from_fn(2, 2, 2, 2, |_, _, _, _| 1.0);
        assert_eq!(a.hadamard(&ones).unwrap(), a);
    }

    #[test]
    fn concat_sums_channels() {
        let a = FeatureTensor::from_fn(2, 1, 2, 2, |ch, _, _, _| ch as f64);
        let b = FeatureTensor::from_fn(3, 1, 2, 2, |ch, _, _, _| 10.0 + ch as f64);
        let cat = a.concat_channels(&b).unwrap();
        assert_eq!(cat.channels(), 5);
        assert_eq!(cat.get(0, 0, 0, 0), 0.0);
        assert_eq!(cat.get(2, 0, 0, 0), 10.0);
        assert_eq!(cat.get(4, 0, 0, 0), 12.0);
        // Splitting recovers the parts.
        assert_eq!(cat.slice_channels(0, 2).unwrap(), a);
        assert_eq!(cat.slice_channels(2, 3).unwrap(), b);
    }

    #[test]
    fn concat_rejects_mismatched_planes() {
        let a = FeatureTensor::zeros(1, 1, 2, 2);
        let b = FeatureTensor::zeros(1, 1, 2, 3);
        assert!(a.concat_channels(&b).is_err());
    }

    #[test]
    fn pad_then_crop_round_trips() {
        let a = FeatureTensor::from_fn(2, 3, 4, 5, |ch, b, r, c| (ch * 137 + b * 31 + r * 7 + c) as f64);
        let padded = a.pad(1, 2, 1);
        assert_eq!(padded.dims(), (2, 5, 8, 7));
        assert_eq!(padded.get(0, 0, 0, 0), 0.0);
        assert_eq!(padded.crop(1, 2, 1).unwrap(), a);
    }

    #[test]
    fn cube_tensor_round_trip() {
        let cube = HsiCube::from_fn(3, 4, 2, |b, r, c| (b * 100 + r * 10 + c) as f64);
        let t = FeatureTensor::from_cube(&cube);
        assert_eq!(t.dims(), (1, 2, 3, 4));
        assert_eq!(t.to_cube().unwrap(), cube);
    }

    #[test]
    fn kernel_shape_validation() {
        let w = Array5::zeros((2, 3, 3, 3, 3));
        assert!(Kernel3d::new(2, 3, (3, 3, 3), (1, 1, 1), Padding::Same, w.clone(), Array1::zeros(2)).is_ok());
        // even kernel dims cannot be "same"
        let w_even = Array5::zeros((2, 3, 2, 3, 3));
        assert!(Kernel3d::new(2, 3, (2, 3, 3), (1, 1, 1), Padding::Same, w_even, Array1::zeros(2)).is_err());
        // bias must fit one side
        assert!(Kernel3d::new(2, 3, (3, 3, 3), (1, 1, 1), Padding::Same, w, Array1::zeros(5)).is_err());
    }
}

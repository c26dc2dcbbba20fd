//! Gated recurrent convolution unit.
//!
//! One unit runs two 3D convolutions (or their transposes) over the input
//! features to produce pixel-wise weight maps W = sigmoid(h_w * I) and
//! candidate maps F = tanh(h_f * I), then fuses the candidates across the
//! band axis with the gated recurrence h_i = (1-w_i) h_{i-1} + w_i f_i,
//! starting from h_0 = 0. A bidirectional unit owns a second kernel pair for
//! the reverse sweep and either stacks the two fused maps along channels or
//! sums them (the form used when the output must keep a fixed channel count).

use ndarray::{Array1, Array5};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{
    conv3d, conv3d_linear, conv3d_transposed, conv3d_transposed_linear, conv3d_weight_grad,
};
use crate::error::{CoreError, Result};
use crate::feature::{FeatureTensor, Kernel3d, Padding};

/// Band-sweep direction of the gated fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

/// How a bidirectional unit combines its two fused maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMode {
    /// Concatenate along channels (doubles the per-direction width).
    Stack,
    /// Elementwise sum (keeps the per-direction width).
    Sum,
}

/// One gated recurrent convolution unit.
#[derive(Debug, Clone)]
pub struct GrconvUnit {
    /// h_w, producing the weight maps.
    pub weight_kernel: Kernel3d,
    /// h_f, producing the candidate feature maps.
    pub feature_kernel: Kernel3d,
    /// Second pair for the reverse sweep of a bidirectional unit.
    pub reverse_weight_kernel: Option<Kernel3d>,
    pub reverse_feature_kernel: Option<Kernel3d>,
    pub direction: Direction,
    pub merge: MergeMode,
    /// Apply the kernels as transposed convolutions (upsampling units).
    pub transposed: bool,
}

/// Per-direction activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DirectionCache {
    w: FeatureTensor,
    f: FeatureTensor,
    h: FeatureTensor,
}

/// Forward activations of one unit application.
#[derive(Debug, Clone)]
pub struct UnitCache {
    input: FeatureTensor,
    dirs: Vec<DirectionCache>,
}

/// Gradients for one kernel.
#[derive(Debug, Clone)]
pub struct KernelGrads {
    pub weights: Array5<f64>,
    pub bias: Array1<f64>,
}

impl KernelGrads {
    fn zeros_like(kernel: &Kernel3d) -> Self {
        Self {
            weights: Array5::zeros(kernel.weights.raw_dim()),
            bias: Array1::zeros(kernel.bias.len()),
        }
    }
}

/// Gradients for one unit, kernel by kernel.
#[derive(Debug, Clone)]
pub struct GrconvUnitGrads {
    pub weight_kernel: KernelGrads,
    pub feature_kernel: KernelGrads,
    pub reverse_weight_kernel: Option<KernelGrads>,
    pub reverse_feature_kernel: Option<KernelGrads>,
}

fn init_kernel(
    rng: &mut ChaCha8Rng,
    out_channels: usize,
    in_channels: usize,
    dims: (usize, usize, usize),
    stride: (usize, usize, usize),
    bias_len: usize,
) -> Kernel3d {
    // symmetric uniform fan-in scaling keeps pre-activations in the linear
    // regime of sigmoid/tanh at initialization
    let fan_in = (in_channels.max(out_channels) * dims.0 * dims.1 * dims.2) as f64;
    let limit = 1.0 / fan_in.sqrt();
    let weights = Array5::from_shape_fn((out_channels, in_channels, dims.0, dims.1, dims.2), |_| {
        rng.random_range(-limit..limit)
    });
    let bias = Array1::from_shape_fn(bias_len, |_| rng.random_range(-limit..limit));
    Kernel3d::new(out_channels, in_channels, dims, stride, Padding::Same, weights, bias)
        .expect("constructed shapes are consistent")
}

impl GrconvUnit {
    /// Single-direction unit mapping `in_channels` to `out_channels`.
    pub fn single(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: (usize, usize, usize),
        transposed: bool,
        direction: Direction,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if direction == Direction::Bidirectional {
            return Err(CoreError::InvalidArgument(
                "use GrconvUnit::bidirectional for two-sweep units".into(),
            ));
        }
        let dims = (kernel, kernel, kernel);
        let make = |rng: &mut ChaCha8Rng| {
            if transposed {
                // the transposed op maps kernel.out_channels -> kernel.in_channels
                init_kernel(rng, in_channels, out_channels, dims, stride, out_channels)
            } else {
                init_kernel(rng, out_channels, in_channels, dims, stride, out_channels)
            }
        };
        Ok(Self {
            weight_kernel: make(rng),
            feature_kernel: make(rng),
            reverse_weight_kernel: None,
            reverse_feature_kernel: None,
            direction,
            merge: MergeMode::Stack,
            transposed,
        })
    }

    /// Bidirectional unit. With [`MergeMode::Stack`] each sweep produces
    /// `out_channels / 2` maps (so `out_channels` must be even); with
    /// [`MergeMode::Sum`] each sweep produces `out_channels`.
    pub fn bidirectional(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: (usize, usize, usize),
        transposed: bool,
        merge: MergeMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let per_dir = match merge {
            MergeMode::Stack => {
                if out_channels % 2 != 0 {
                    return Err(CoreError::InvalidArgument(format!(
                        "stacked bidirectional unit needs even output channels, got {out_channels}"
                    )));
                }
                out_channels / 2
            }
            MergeMode::Sum => out_channels,
        };
        let dims = (kernel, kernel, kernel);
        let make = |rng: &mut ChaCha8Rng| {
            if transposed {
                init_kernel(rng, in_channels, per_dir, dims, stride, per_dir)
            } else {
                init_kernel(rng, per_dir, in_channels, dims, stride, per_dir)
            }
        };
        Ok(Self {
            weight_kernel: make(rng),
            feature_kernel: make(rng),
            reverse_weight_kernel: Some(make(rng)),
            reverse_feature_kernel: Some(make(rng)),
            direction: Direction::Bidirectional,
            merge,
            transposed,
        })
    }

    /// Channels this unit consumes.
    pub fn in_channels(&self) -> usize {
        if self.transposed {
            self.weight_kernel.out_channels
        } else {
            self.weight_kernel.in_channels
        }
    }

    /// Channels this unit produces (after merging directions).
    pub fn out_channels(&self) -> usize {
        let per_dir = if self.transposed {
            self.weight_kernel.in_channels
        } else {
            self.weight_kernel.out_channels
        };
        match (self.direction, self.merge) {
            (Direction::Bidirectional, MergeMode::Stack) => 2 * per_dir,
            _ => per_dir,
        }
    }

    fn apply_conv(&self, input: &FeatureTensor, kernel: &Kernel3d) -> Result<FeatureTensor> {
        if self.transposed {
            conv3d_transposed(input, kernel)
        } else {
            conv3d(input, kernel)
        }
    }

    fn direction_pass(
        &self,
        input: &FeatureTensor,
        w_kernel: &Kernel3d,
        f_kernel: &Kernel3d,
        reverse: bool,
    ) -> Result<DirectionCache> {
        let w = self.apply_conv(input, w_kernel)?.sigmoid();
        let f = self.apply_conv(input, f_kernel)?.tanh();
        let h = fuse(&w, &f, reverse);
        Ok(DirectionCache { w, f, h })
    }

    /// Run the unit, returning the output and the activations needed for
    /// [`GrconvUnit::backward`].
    pub fn forward(&self, input: &FeatureTensor) -> Result<(FeatureTensor, UnitCache)> {
        let expected = self.in_channels();
        if input.channels() != expected {
            return Err(CoreError::DimMismatch(format!(
                "gated unit expects {expected} channels, got {}",
                input.channels()
            )));
        }
        match self.direction {
            Direction::Forward | Direction::Backward => {
                let reverse = self.direction == Direction::Backward;
                let dir =
                    self.direction_pass(input, &self.weight_kernel, &self.feature_kernel, reverse)?;
                let out = dir.h.clone();
                Ok((
                    out,
                    UnitCache {
                        input: input.clone(),
                        dirs: vec![dir],
                    },
                ))
            }
            Direction::Bidirectional => {
                let fwd =
                    self.direction_pass(input, &self.weight_kernel, &self.feature_kernel, false)?;
                let bwd = self.direction_pass(
                    input,
                    self.reverse_weight_kernel.as_ref().expect("bidirectional"),
                    self.reverse_feature_kernel.as_ref().expect("bidirectional"),
                    true,
                )?;
                let out = match self.merge {
                    MergeMode::Stack => fwd.h.concat_channels(&bwd.h)?,
                    MergeMode::Sum => fwd.h.add(&bwd.h)?,
                };
                Ok((
                    out,
                    UnitCache {
                        input: input.clone(),
                        dirs: vec![fwd, bwd],
                    },
                ))
            }
        }
    }

    fn kernel_backward(
        &self,
        cache_input: &FeatureTensor,
        kernel: &Kernel3d,
        d_pre: &FeatureTensor,
    ) -> Result<(FeatureTensor, KernelGrads)> {
        let grad_input = if self.transposed {
            conv3d_linear(d_pre, kernel)?
        } else {
            conv3d_transposed_linear(d_pre, kernel)?
        };
        let weights = if self.transposed {
            conv3d_weight_grad(d_pre, cache_input, kernel)?
        } else {
            conv3d_weight_grad(cache_input, d_pre, kernel)?
        };
        let mut bias = Array1::zeros(kernel.bias.len());
        if !kernel.bias.is_empty() {
            // one bias per produced channel
            for (ch, slot) in bias.iter_mut().enumerate() {
                *slot = d_pre
                    .data()
                    .index_axis(ndarray::Axis(0), ch)
                    .iter()
                    .sum::<f64>();
            }
        }
        Ok((grad_input, KernelGrads { weights, bias }))
    }

    fn direction_backward(
        &self,
        cache: &UnitCache,
        dir: &DirectionCache,
        w_kernel: &Kernel3d,
        f_kernel: &Kernel3d,
        reverse: bool,
        grad_h: &FeatureTensor,
    ) -> Result<(FeatureTensor, KernelGrads, KernelGrads)> {
        let (d_w, d_f) = fuse_backward(&dir.w, &dir.f, &dir.h, grad_h, reverse);
        // through the activations: sigmoid' = w(1-w), tanh' = 1 - f^2
        let d_pre_w = FeatureTensor::from_array(
            d_w.data() * &dir.w.data().mapv(|w| w * (1.0 - w)),
        );
        let d_pre_f =
            FeatureTensor::from_array(d_f.data() * &dir.f.data().mapv(|f| 1.0 - f * f));
        let (gi_w, gk_w) = self.kernel_backward(&cache.input, w_kernel, &d_pre_w)?;
        let (gi_f, gk_f) = self.kernel_backward(&cache.input, f_kernel, &d_pre_f)?;
        Ok((gi_w.add(&gi_f)?, gk_w, gk_f))
    }

    /// Propagate `grad_out` through the unit: gradient with respect to the
    /// unit input plus per-kernel parameter gradients.
    pub fn backward(
        &self,
        cache: &UnitCache,
        grad_out: &FeatureTensor,
    ) -> Result<(FeatureTensor, GrconvUnitGrads)> {
        match self.direction {
            Direction::Forward | Direction::Backward => {
                let reverse = self.direction == Direction::Backward;
                let (grad_input, gk_w, gk_f) = self.direction_backward(
                    cache,
                    &cache.dirs[0],
                    &self.weight_kernel,
                    &self.feature_kernel,
                    reverse,
                    grad_out,
                )?;
                Ok((
                    grad_input,
                    GrconvUnitGrads {
                        weight_kernel: gk_w,
                        feature_kernel: gk_f,
                        reverse_weight_kernel: None,
                        reverse_feature_kernel: None,
                    },
                ))
            }
            Direction::Bidirectional => {
                let per_dir = cache.dirs[0].h.channels();
                let (g_fwd, g_bwd) = match self.merge {
                    MergeMode::Stack => (
                        grad_out.slice_channels(0, per_dir)?,
                        grad_out.slice_channels(per_dir, per_dir)?,
                    ),
                    MergeMode::Sum => (grad_out.clone(), grad_out.clone()),
                };
                let (gi_fwd, gk_w, gk_f) = self.direction_backward(
                    cache,
                    &cache.dirs[0],
                    &self.weight_kernel,
                    &self.feature_kernel,
                    false,
                    &g_fwd,
                )?;
                let (gi_bwd, gk_rw, gk_rf) = self.direction_backward(
                    cache,
                    &cache.dirs[1],
                    self.reverse_weight_kernel.as_ref().expect("bidirectional"),
                    self.reverse_feature_kernel.as_ref().expect("bidirectional"),
                    true,
                    &g_bwd,
                )?;
                Ok((
                    gi_fwd.add(&gi_bwd)?,
                    GrconvUnitGrads {
                        weight_kernel: gk_w,
                        feature_kernel: gk_f,
                        reverse_weight_kernel: Some(gk_rw),
                        reverse_feature_kernel: Some(gk_rf),
                    },
                ))
            }
        }
    }

    /// Visit parameter slices in declaration order (weights then bias, h_w
    /// then h_f, forward pair then reverse pair).
    pub fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        for k in self.kernels() {
            f(k.weights.as_slice().expect("contiguous"));
            f(k.bias.as_slice().expect("contiguous"));
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for k in self.kernels_mut() {
            f(k.weights.as_slice_mut().expect("contiguous"));
            f(k.bias.as_slice_mut().expect("contiguous"));
        }
    }

    fn kernels(&self) -> Vec<&Kernel3d> {
        let mut v = vec![&self.weight_kernel, &self.feature_kernel];
        if let Some(k) = &self.reverse_weight_kernel {
            v.push(k);
        }
        if let Some(k) = &self.reverse_feature_kernel {
            v.push(k);
        }
        v
    }

    fn kernels_mut(&mut self) -> Vec<&mut Kernel3d> {
        let mut v = vec![&mut self.weight_kernel, &mut self.feature_kernel];
        if let Some(k) = &mut self.reverse_weight_kernel {
            v.push(k);
        }
        if let Some(k) = &mut self.reverse_feature_kernel {
            v.push(k);
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.kernels().iter().map(|k| k.param_count()).sum()
    }
}

impl GrconvUnitGrads {
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        let mut emit = |k: &'a KernelGrads| {
            f(k.weights.as_slice().expect("contiguous"));
            f(k.bias.as_slice().expect("contiguous"));
        };
        emit(&self.weight_kernel);
        emit(&self.feature_kernel);
        if let Some(k) = &self.reverse_weight_kernel {
            emit(k);
        }
        if let Some(k) = &self.reverse_feature_kernel {
            emit(k);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        let mut emit = |k: &mut KernelGrads| {
            f(k.weights.as_slice_mut().expect("contiguous"));
            f(k.bias.as_slice_mut().expect("contiguous"));
        };
        emit(&mut self.weight_kernel);
        emit(&mut self.feature_kernel);
        if let Some(k) = &mut self.reverse_weight_kernel {
            emit(k);
        }
        if let Some(k) = &mut self.reverse_feature_kernel {
            emit(k);
        }
    }

    pub fn zeros_like(unit: &GrconvUnit) -> Self {
        Self {
            weight_kernel: KernelGrads::zeros_like(&unit.weight_kernel),
            feature_kernel: KernelGrads::zeros_like(&unit.feature_kernel),
            reverse_weight_kernel: unit.reverse_weight_kernel.as_ref().map(KernelGrads::zeros_like),
            reverse_feature_kernel: unit
                .reverse_feature_kernel
                .as_ref()
                .map(KernelGrads::zeros_like),
        }
    }
}

/// Gated band recurrence h_i = (1-w_i) h_prev + w_i f_i with h_0 = 0,
/// sweeping bands last-to-first when `reverse` is set.
pub fn fuse(w: &FeatureTensor, f: &FeatureTensor, reverse: bool) -> FeatureTensor {
    let (channels, bands, rows, cols) = w.dims();
    let plane = rows * cols;
    let mut h = FeatureTensor::zeros(channels, bands, rows, cols);
    let ws = w.as_slice();
    let fs = f.as_slice();
    let hs = h.as_mut_slice();
    for ch in 0..channels {
        let base_ch = ch * bands * plane;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..bands).rev())
        } else {
            Box::new(0..bands)
        };
        let mut prev: Option<usize> = None;
        for b in order {
            let base = base_ch + b * plane;
            match prev {
                None => {
                    for i in 0..plane {
                        hs[base + i] = ws[base + i] * fs[base + i];
                    }
                }
                Some(pb) => {
                    let pbase = base_ch + pb * plane;
                    for i in 0..plane {
                        let wv = ws[base + i];
                        hs[base + i] = (1.0 - wv) * hs[pbase + i] + wv * fs[base + i];
                    }
                }
            }
            prev = Some(b);
        }
    }
    h
}

/// Gradients of [`fuse`] with respect to the weight and candidate maps.
pub fn fuse_backward(
    w: &FeatureTensor,
    f: &FeatureTensor,
    h: &FeatureTensor,
    grad_h: &FeatureTensor,
    reverse: bool,
) -> (FeatureTensor, FeatureTensor) {
    let (channels, bands, rows, cols) = w.dims();
    let plane = rows * cols;
    let mut dw = FeatureTensor::zeros(channels, bands, rows, cols);
    let mut df = FeatureTensor::zeros(channels, bands, rows, cols);
    let ws = w.as_slice();
    let fs = f.as_slice();
    let hs = h.as_slice();
    let gs = grad_h.as_slice();
    let dws = dw.as_mut_slice();
    let dfs = df.as_mut_slice();
    let mut carry = vec![0.0f64; plane];
    for ch in 0..channels {
        let base_ch = ch * bands * plane;
        carry.iter_mut().for_each(|v| *v = 0.0);
        // walk the recurrence in reverse dependency order
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new(0..bands)
        } else {
            Box::new((0..bands).rev())
        };
        for b in order {
            let base = base_ch + b * plane;
            // index of the h value this band blended against (iteration
            // predecessor in the forward sweep)
            let prev_band = if reverse {
                if b + 1 < bands {
                    Some(b + 1)
                } else {
                    None
                }
            } else if b > 0 {
                Some(b - 1)
            } else {
                None
            };
            let pbase = prev_band.map(|pb| base_ch + pb * plane);
            for i in 0..plane {
                let g = gs[base + i] + carry[i];
                let h_prev = pbase.map_or(0.0, |pb| hs[pb + i]);
                dws[base + i] = g * (fs[base + i] - h_prev);
                dfs[base + i] = g * ws[base + i];
                carry[i] = g * (1.0 - ws[base + i]);
            }
        }
    }
    (dw, df)
}

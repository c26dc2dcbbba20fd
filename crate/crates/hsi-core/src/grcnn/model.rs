//! Residual encoder-decoder built from gated recurrent convolution units.
//!
//! Layout: a bidirectional entry unit, `depth` encoder stages of
//! (stride-2 downsampling unit, residual block that widens the features),
//! a mirrored decoder whose stages upsample with transposed units and
//! consume long skip connections by channel concatenation, and a
//! bidirectional exit unit that merges its two sweeps by summation to emit
//! the single-channel output. Single-direction stages alternate their sweep
//! direction along the depth; the decoder mirrors the encoder's directions.
//!
//! An optional noise level map (one constant channel of sigma/255) is
//! concatenated to the input so one set of weights covers a continuous
//! range of noise strengths.

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::HsiCube;
use crate::error::{CoreError, Result};
use crate::feature::FeatureTensor;
use crate::grcnn::unit::{Direction, GrconvUnit, GrconvUnitGrads, MergeMode, UnitCache};

/// Constant extra input channel encoding the denoising strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevelMap {
    /// Noise level on the 0-255 scale.
    pub sigma: f64,
}

impl NoiseLevelMap {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "noise level must be non-negative, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    /// Channel value on the normalized [0, 1] scale.
    pub fn value(&self) -> f64 {
        self.sigma / 255.0
    }
}

/// Architecture descriptor; also the checkpoint header payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature widths per stage, shallow to deep; length = depth + 1.
    pub widths: Vec<usize>,
    /// Concatenate a constant sigma/255 channel to the input.
    pub uses_noise_map: bool,
    /// Cubic kernel extent of every unit (odd).
    pub kernel_size: usize,
    /// Sigma range the weights were trained for, recorded by the trainer.
    pub trained_sigma_range: Option<(f64, f64)>,
}

impl ModelConfig {
    /// Two down/up stages at widths 8/16/32: small enough for CPU training.
    pub fn toy() -> Self {
        Self {
            widths: vec![8, 16, 32],
            uses_noise_map: true,
            kernel_size: 3,
            trained_sigma_range: None,
        }
    }

    /// Minimal architecture for gradient checks (a few thousand parameters).
    pub fn tiny() -> Self {
        Self {
            widths: vec![2, 4],
            uses_noise_map: true,
            kernel_size: 3,
            trained_sigma_range: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(CoreError::InvalidArgument("empty stage widths".into()));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidArgument("zero stage width".into()));
        }
        if self.widths[0] % 2 != 0 {
            return Err(CoreError::InvalidArgument(
                "entry width must be even (two stacked sweep directions)".into(),
            ));
        }
        if self.kernel_size % 2 == 0 {
            return Err(CoreError::InvalidArgument("kernel size must be odd".into()));
        }
        Ok(())
    }

    fn input_channels(&self) -> usize {
        if self.uses_noise_map {
            2
        } else {
            1
        }
    }
}

/// Two 3x3x3 gated units plus a 1x1x1 gated projection shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub unit1: GrconvUnit,
    pub unit2: GrconvUnit,
    pub shortcut: GrconvUnit,
}

#[derive(Debug, Clone)]
pub struct ResBlockCache {
    u1: UnitCache,
    u2: UnitCache,
    sc: UnitCache,
}

#[derive(Debug, Clone)]
pub struct ResBlockGrads {
    pub unit1: GrconvUnitGrads,
    pub unit2: GrconvUnitGrads,
    pub shortcut: GrconvUnitGrads,
}

impl ResBlock {
    fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        direction: Direction,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            unit1: GrconvUnit::single(in_channels, out_channels, kernel, (1, 1, 1), false, direction, rng)?,
            unit2: GrconvUnit::single(out_channels, out_channels, kernel, (1, 1, 1), false, direction, rng)?,
            shortcut: GrconvUnit::single(in_channels, out_channels, 1, (1, 1, 1), false, direction, rng)?,
        })
    }

    fn forward(&self, input: &FeatureTensor) -> Result<(FeatureTensor, ResBlockCache)> {
        let (mid, u1) = self.unit1.forward(input)?;
        let (main, u2) = self.unit2.forward(&mid)?;
        let (proj, sc) = self.shortcut.forward(input)?;
        Ok((main.add(&proj)?, ResBlockCache { u1, u2, sc }))
    }

    fn backward(
        &self,
        cache: &ResBlockCache,
        grad_out: &FeatureTensor,
    ) -> Result<(FeatureTensor, ResBlockGrads)> {
        let (g_mid, g_u2) = self.unit2.backward(&cache.u2, grad_out)?;
        let (g_in_main, g_u1) = self.unit1.backward(&cache.u1, &g_mid)?;
        let (g_in_proj, g_sc) = self.shortcut.backward(&cache.sc, grad_out)?;
        Ok((
            g_in_main.add(&g_in_proj)?,
            ResBlockGrads {
                unit1: g_u1,
                unit2: g_u2,
                shortcut: g_sc,
            },
        ))
    }

    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        self.unit1.visit_params(f);
        self.unit2.visit_params(f);
        self.shortcut.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.unit1.visit_params_mut(f);
        self.unit2.visit_params_mut(f);
        self.shortcut.visit_params_mut(f);
    }
}

impl ResBlockGrads {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        self.unit1.visit(f);
        self.unit2.visit(f);
        self.shortcut.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.unit1.visit_mut(f);
        self.unit2.visit_mut(f);
        self.shortcut.visit_mut(f);
    }
}

/// The denoising network.
#[derive(Debug, Clone)]
pub struct GrcnnModel {
    config: ModelConfig,
    entry: GrconvUnit,
    encoder: Vec<(GrconvUnit, ResBlock)>,
    decoder: Vec<(GrconvUnit, ResBlock)>,
    exit: GrconvUnit,
    /// Bumped on every mutable parameter access; guards stale caches.
    version: u64,
}

/// Forward activations retained for one backward pass.
pub struct ForwardPass {
    pub output: HsiCube,
    entry: UnitCache,
    encoder: Vec<(UnitCache, ResBlockCache)>,
    decoder: Vec<(UnitCache, ResBlockCache)>,
    exit: UnitCache,
    version: u64,
}

/// Parameter gradients mirroring the model structure.
pub struct GrcnnGrads {
    entry: GrconvUnitGrads,
    encoder: Vec<(GrconvUnitGrads, ResBlockGrads)>,
    decoder: Vec<(GrconvUnitGrads, ResBlockGrads)>,
    exit: GrconvUnitGrads,
}

/// Direction assigned to a single-direction stage: alternate along the
/// encoder, mirror in the decoder.
fn stage_direction(stage: usize) -> Direction {
    if stage % 2 == 0 {
        Direction::Forward
    } else {
        Direction::Backward
    }
}

impl GrcnnModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let depth = config.depth();
        let w = &config.widths;

        let entry = GrconvUnit::bidirectional(
            config.input_channels(),
            w[0],
            k,
            (1, 1, 1),
            false,
            MergeMode::Stack,
            &mut rng,
        )?;

        let mut encoder = Vec::with_capacity(depth);
        for i in 0..depth {
            let dir = stage_direction(i);
            let down = GrconvUnit::single(w[i], w[i], k, (1, 2, 2), false, dir, &mut rng)?;
            let res = ResBlock::new(w[i], w[i + 1], k, dir, &mut rng)?;
            encoder.push((down, res));
        }

        let mut decoder = Vec::with_capacity(depth);
        for j in 0..depth {
            let mirrored = depth - 1 - j;
            let dir = stage_direction(mirrored);
            let up = GrconvUnit::single(w[mirrored + 1], w[mirrored], k, (1, 2, 2), true, dir, &mut rng)?;
            // skip concatenation doubles the channels entering the block
            let res = ResBlock::new(2 * w[mirrored], w[mirrored], k, dir, &mut rng)?;
            decoder.push((up, res));
        }

        let exit = GrconvUnit::bidirectional(w[0], 1, k, (1, 1, 1), false, MergeMode::Sum, &mut rng)?;

        Ok(Self {
            config,
            entry,
            encoder,
            decoder,
            exit,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn set_trained_sigma_range(&mut self, range: (f64, f64)) {
        self.config.trained_sigma_range = Some(range);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |s| n += s.len());
        n
    }

    fn assemble_input(&self, noisy: &HsiCube, map: Option<&NoiseLevelMap>) -> Result<FeatureTensor> {
        let (rows, cols, _bands) = noisy.dims();
        let depth = self.config.depth();
        let div = 1usize << depth;
        if rows % div != 0 || cols % div != 0 {
            return Err(CoreError::DimMismatch(format!(
                "spatial dims {rows}x{cols} must be divisible by 2^depth = {div}"
            )));
        }
        let base = FeatureTensor::from_cube(noisy);
        match (self.config.uses_noise_map, map) {
            (true, Some(m)) => {
                let level = FeatureTensor::from_fn(1, noisy.bands(), rows, cols, |_, _, _, _| m.value());
                base.concat_channels(&level)
            }
            (false, None) => Ok(base),
            (true, None) => Err(CoreError::InvalidArgument(
                "model requires a noise level map".into(),
            )),
            (false, Some(_)) => Err(CoreError::InvalidArgument(
                "model does not take a noise level map".into(),
            )),
        }
    }

    /// Run the network and keep every activation needed for `backward`.
    pub fn forward_training(
        &self,
        noisy: &HsiCube,
        map: Option<&NoiseLevelMap>,
    ) -> Result<ForwardPass> {
        let input = self.assemble_input(noisy, map)?;
        let depth = self.config.depth();

        let (entry_out, entry_cache) = self.entry.forward(&input)?;
        let mut skips: Vec<FeatureTensor> = vec![entry_out.clone()];
        let mut cur = entry_out;
        let mut enc_caches = Vec::with_capacity(depth);
        for (i, (down, res)) in self.encoder.iter().enumerate() {
            let (d, dc) = down.forward(&cur)?;
            let (r, rc) = res.forward(&d)?;
            if i < depth - 1 {
                skips.push(r.clone());
            }
            cur = r;
            enc_caches.push((dc, rc));
        }

        let mut dec_caches = Vec::with_capacity(depth);
        for (j, (up, res)) in self.decoder.iter().enumerate() {
            let (u, uc) = up.forward(&cur)?;
            let skip = &skips[depth - 1 - j];
            let cat = u.concat_channels(skip)?;
            let (r, rc) = res.forward(&cat)?;
            cur = r;
            dec_caches.push((uc, rc));
        }

        let (out, exit_cache) = self.exit.forward(&cur)?;
        let output = out.to_cube()?;
        output.ensure_finite("denoiser forward")?;
        Ok(ForwardPass {
            output,
            entry: entry_cache,
            encoder: enc_caches,
            decoder: dec_caches,
            exit: exit_cache,
            version: self.version,
        })
    }

    /// Plain inference: same dims as the input, deterministic.
    pub fn forward(&self, noisy: &HsiCube, map: Option<&NoiseLevelMap>) -> Result<HsiCube> {
        Ok(self.forward_training(noisy, map)?.output)
    }

    /// Gaussian denoiser interface: builds the sigma map (when the model
    /// takes one) and runs the network.
    pub fn denoise(&self, noisy: &HsiCube, sigma: f64) -> Result<HsiCube> {
        let map = if self.config.uses_noise_map {
            Some(NoiseLevelMap::new(sigma)?)
        } else {
            None
        };
        self.forward(noisy, map.as_ref())
    }

    /// Parameter gradients for `grad_output` = dLoss/dOutput. The pass must
    /// come from the current weights.
    pub fn backward(&self, pass: &ForwardPass, grad_output: &HsiCube) -> Result<GrcnnGrads> {
        if pass.version != self.version {
            return Err(CoreError::StaleCache);
        }
        if grad_output.dims() != pass.output.dims() {
            return Err(CoreError::DimMismatch(format!(
                "grad_output {:?} vs output {:?}",
                grad_output.dims(),
                pass.output.dims()
            )));
        }
        let depth = self.config.depth();
        let mut g = FeatureTensor::from_cube(grad_output);

        let (g_exit_in, exit_grads) = self.exit.backward(&pass.exit, &g)?;
        g = g_exit_in;

        // decoder stages in reverse; collect gradients flowing into skips
        let mut skip_grads: Vec<Option<FeatureTensor>> = vec![None; depth];
        let mut dec_grads_rev = Vec::with_capacity(depth);
        for j in (0..depth).rev() {
            let (up, res) = &self.decoder[j];
            let (uc, rc) = &pass.decoder[j];
            let (g_cat, res_g) = res.backward(rc, &g)?;
            let up_out_ch = up.out_channels();
            let g_up_out = g_cat.slice_channels(0, up_out_ch)?;
            let g_skip = g_cat.slice_channels(up_out_ch, g_cat.channels() - up_out_ch)?;
            let slot = depth - 1 - j;
            skip_grads[slot] = Some(match skip_grads[slot].take() {
                Some(prev) => prev.add(&g_skip)?,
                None => g_skip,
            });
            let (g_up_in, up_g) = up.backward(uc, &g_up_out)?;
            g = g_up_in;
            dec_grads_rev.push((up_g, res_g));
        }

        // encoder stages in reverse; stage i's output was skip slot i+1
        let mut enc_grads_rev = Vec::with_capacity(depth);
        for i in (0..depth).rev() {
            let (down, res) = &self.encoder[i];
            let (dc, rc) = &pass.encoder[i];
            if i < depth - 1 {
                if let Some(extra) = skip_grads[i + 1].take() {
                    g = g.add(&extra)?;
                }
            }
            let (g_res_in, res_g) = res.backward(rc, &g)?;
            let (g_down_in, down_g) = down.backward(dc, &g_res_in)?;
            g = g_down_in;
            enc_grads_rev.push((down_g, res_g));
        }

        if let Some(extra) = skip_grads[0].take() {
            g = g.add(&extra)?;
        }
        let (_g_input, entry_grads) = self.entry.backward(&pass.entry, &g)?;

        enc_grads_rev.reverse();
        dec_grads_rev.reverse();
        Ok(GrcnnGrads {
            entry: entry_grads,
            encoder: enc_grads_rev,
            decoder: dec_grads_rev,
            exit: exit_grads,
        })
    }

    /// Visit every parameter slice in declaration order (also the
    /// checkpoint blob order).
    pub fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        self.entry.visit_params(f);
        for (down, res) in &self.encoder {
            down.visit_params(f);
            res.visit_params(f);
        }
        for (up, res) in &self.decoder {
            up.visit_params(f);
            res.visit_params(f);
        }
        self.exit.visit_params(f);
    }

    /// Mutable parameter visit; invalidates outstanding forward passes.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.version += 1;
        self.entry.visit_params_mut(f);
        for (down, res) in &mut self.encoder {
            down.visit_params_mut(f);
            res.visit_params_mut(f);
        }
        for (up, res) in &mut self.decoder {
            up.visit_params_mut(f);
            res.visit_params_mut(f);
        }
        self.exit.visit_params_mut(f);
    }

    /// Mutable access to structural units (test setups).
    pub fn exit_unit_mut(&mut self) -> &mut GrconvUnit {
        self.version += 1;
        &mut self.exit
    }

    pub fn entry_unit_mut(&mut self) -> &mut GrconvUnit {
        self.version += 1;
        &mut self.entry
    }
}

impl GrcnnGrads {
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        self.entry.visit(f);
        for (down, res) in &self.encoder {
            down.visit(f);
            res.visit(f);
        }
        for (up, res) in &self.decoder {
            up.visit(f);
            res.visit(f);
        }
        self.exit.visit(f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.entry.visit_mut(f);
        for (down, res) in &mut self.encoder {
            down.visit_mut(f);
            res.visit_mut(f);
        }
        for (up, res) in &mut self.decoder {
            up.visit_mut(f);
            res.visit_mut(f);
        }
        self.exit.visit_mut(f);
    }

    pub fn zeros_like(model: &GrcnnModel) -> Self {
        Self {
            entry: GrconvUnitGrads::zeros_like(&model.entry),
            encoder: model
                .encoder
                .iter()
                .map(|(d, r)| {
                    (
                        GrconvUnitGrads::zeros_like(d),
                        ResBlockGrads {
                            unit1: GrconvUnitGrads::zeros_like(&r.unit1),
                            unit2: GrconvUnitGrads::zeros_like(&r.unit2),
                            shortcut: GrconvUnitGrads::zeros_like(&r.shortcut),
                        },
                    )
                })
                .collect(),
            decoder: model
                .decoder
                .iter()
                .map(|(u, r)| {
                    (
                        GrconvUnitGrads::zeros_like(u),
                        ResBlockGrads {
                            unit1: GrconvUnitGrads::zeros_like(&r.unit1),
                            unit2: GrconvUnitGrads::zeros_like(&r.unit2),
                            shortcut: GrconvUnitGrads::zeros_like(&r.shortcut),
                        },
                    )
                })
                .collect(),
            exit: GrconvUnitGrads::zeros_like(&model.exit),
        }
    }

    /// self += alpha * other, slice by slice.
    pub fn axpy(&mut self, alpha: f64, other: &GrcnnGrads) {
        let mut sources: Vec<&[f64]> = Vec::new();
        other.visit(&mut |s| sources.push(s));
        let mut idx = 0;
        self.visit_mut(&mut |dst| {
            let src = sources[idx];
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
            idx += 1;
        });
    }

    pub fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |s| {
            for v in s {
                *v *= factor;
            }
        });
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        self.visit(&mut |s| {
            for v in s {
                m = m.max(v.abs());
            }
        });
        m
    }
}

/// Mean squared error and its gradient with respect to the prediction
/// (dL/dpred = 2 (pred - target) / n).
pub fn mse_loss(pred: &HsiCube, target: &HsiCube) -> Result<(f64, HsiCube)> {
    let diff = pred.sub(target)?;
    let n = diff.len() as f64;
    let loss = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    let grad = diff.scale(2.0 / n);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HsiCube::from_fn(rows, cols, bands, |_, _, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn forward_preserves_dims_and_is_pure() {
        let model = GrcnnModel::new(ModelConfig::toy(), 1).unwrap();
        let x = random_cube(16, 16, 6, 2);
        let map = NoiseLevelMap::new(25.0).unwrap();
        let a = model.forward(&x, Some(&map)).unwrap();
        let b = model.forward(&x, Some(&map)).unwrap();
        assert_eq!(a.dims(), x.dims());
        assert_eq!(a, b); // byte-identical repeat
        assert!(a.all_finite());
    }

    #[test]
    fn zeroed_exit_unit_emits_zero_cube() {
        let mut model = GrcnnModel::new(ModelConfig::toy(), 3).unwrap();
        {
            let exit = model.exit_unit_mut();
            exit.weight_kernel.weights.fill(0.0);
            exit.weight_kernel.bias.fill(0.0);
            exit.feature_kernel.weights.fill(0.0);
            exit.feature_kernel.bias.fill(0.0);
            if let Some(k) = &mut exit.reverse_weight_kernel {
                k.weights.fill(0.0);
                k.bias.fill(0.0);
            }
            if let Some(k) = &mut exit.reverse_feature_kernel {
                k.weights.fill(0.0);
                k.bias.fill(0.0);
            }
        }
        let x = random_cube(8, 8, 4, 4);
        let map = NoiseLevelMap::new(10.0).unwrap();
        let out = model.forward(&x, Some(&map)).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_and_map_preconditions() {
        let model = GrcnnModel::new(ModelConfig::toy(), 5).unwrap();
        let map = NoiseLevelMap::new(25.0).unwrap();
        // 10 not divisible by 4
        let bad = random_cube(10, 16, 4, 6);
        assert!(model.forward(&bad, Some(&map)).is_err());
        // missing map
        let x = random_cube(16, 16, 4, 7);
        assert!(model.forward(&x, None).is_err());
        // superfluous map
        let plain = GrcnnModel::new(
            ModelConfig {
                uses_noise_map: false,
                ..ModelConfig::toy()
            },
            5,
        )
        .unwrap();
        assert!(plain.forward(&x, Some(&map)).is_err());
        assert!(plain.forward(&x, None).is_ok());
    }

    #[test]
    fn stale_cache_detected() {
        let mut model = GrcnnModel::new(ModelConfig::tiny(), 8).unwrap();
        let x = random_cube(4, 4, 3, 9);
        let map = NoiseLevelMap::new(30.0).unwrap();
        let pass = model.forward_training(&x, Some(&map)).unwrap();
        let (_, grad) = mse_loss(&pass.output, &x).unwrap();
        // mutate weights, then try to reuse the pass
        model.visit_params_mut(&mut |s| {
            for v in s {
                *v += 0.01;
            }
        });
        assert!(matches!(
            model.backward(&pass, &grad),
            Err(CoreError::StaleCache)
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let model = GrcnnModel::new(ModelConfig::tiny(), 10).unwrap();
        let x = random_cube(4, 4, 3, 11);
        let map = NoiseLevelMap::new(30.0).unwrap();
        let pass = model.forward_training(&x, Some(&map)).unwrap();
        let zero = HsiCube::zeros(4, 4, 3);
        let grads = model.backward(&pass, &zero).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn mse_gradient_is_analytic_derivative() {
        let a = random_cube(4, 4, 2, 12);
        let b = random_cube(4, 4, 2, 13);
        let (loss, grad) = mse_loss(&a, &b).unwrap();
        let n = a.len() as f64;
        for i in 0..a.len() {
            let expect = 2.0 * (a.as_slice()[i] - b.as_slice()[i]) / n;
            assert!((grad.as_slice()[i] - expect).abs() < 1e-15);
        }
        assert!(loss > 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // the central gradient-correctness check on a tiny architecture
        let mut model = GrcnnModel::new(ModelConfig::tiny(), 14).unwrap();
        assert!(model.param_count() <= 5000, "{} params", model.param_count());
        let x = random_cube(4, 4, 3, 15);
        let target = random_cube(4, 4, 3, 16);
        let map = NoiseLevelMap::new(25.0).unwrap();

        let pass = model.forward_training(&x, Some(&map)).unwrap();
        let (_, grad_out) = mse_loss(&pass.output, &target).unwrap();
        let grads = model.backward(&pass, &grad_out).unwrap();

        let mut analytic: Vec<f64> = Vec::new();
        grads.visit(&mut |s| analytic.extend_from_slice(s));

        let step = 1e-4;
        let mut max_rel = 0.0f64;
        let total = analytic.len();
        let mut flat_idx = 0usize;
        let loss_at = |model: &GrcnnModel| -> f64 {
            let out = model.forward(&x, Some(&map)).unwrap();
            mse_loss(&out, &target).unwrap().0
        };
        let mut offsets = Vec::new();
        model.visit_params(&mut |s| offsets.push(s.len()));
        let n_slices = offsets.len();
        // central differences parameter by parameter
        for slice_idx in 0..n_slices {
            for j in 0..offsets[slice_idx] {
                let poke = |delta: f64, m: &mut GrcnnModel| {
                    let mut k = 0;
                    m.visit_params_mut(&mut |s| {
                        if k == slice_idx {
                            s[j] += delta;
                        }
                        k += 1;
                    });
                };
                poke(step, &mut model);
                let up = loss_at(&model);
                poke(-2.0 * step, &mut model);
                let dn = loss_at(&model);
                poke(step, &mut model);
                let numeric = (up - dn) / (2.0 * step);
                let a = analytic[flat_idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
                flat_idx += 1;
            }
        }
        assert_eq!(flat_idx, total);
        assert!(max_rel <= 1e-4, "max rel err {max_rel}");
    }

    #[test]
    fn band_reversal_with_mirrored_model_reverses_output() {
        // flip every kernel along the band axis, swap sweep directions
        // (for bidirectional units: swap the kernel pairs, then flip), and
        // the output of the mirrored model on band-reversed input equals
        // the band-reversed original output. The model's bidirectional ends
        // use sum merging here: under a stack merge the mirror would also
        // relabel the stacked halves, which is a channel permutation, not a
        // model symmetry.
        fn flip_kernel_bands(k: &crate::feature::Kernel3d) -> crate::feature::Kernel3d {
            let mut out = k.clone();
            let kd = k.dims.0;
            for oc in 0..k.out_channels {
                for ic in 0..k.in_channels {
                    for dz in 0..kd {
                        for dy in 0..k.dims.1 {
                            for dx in 0..k.dims.2 {
                                out.weights[(oc, ic, dz, dy, dx)] =
                                    k.weights[(oc, ic, kd - 1 - dz, dy, dx)];
                            }
                        }
                    }
                }
            }
            out
        }
        fn mirror_unit(u: &GrconvUnit) -> GrconvUnit {
            let mut m = u.clone();
            match u.direction {
                Direction::Forward => m.direction = Direction::Backward,
                Direction::Backward => m.direction = Direction::Forward,
                Direction::Bidirectional => {
                    // swapping sweeps = swapping the two kernel pairs
                    m.reverse_weight_kernel = Some(u.weight_kernel.clone());
                    m.reverse_feature_kernel = Some(u.feature_kernel.clone());
                    m.weight_kernel = u.reverse_weight_kernel.clone().unwrap();
                    m.feature_kernel = u.reverse_feature_kernel.clone().unwrap();
                }
            }
            m.weight_kernel = flip_kernel_bands(&m.weight_kernel);
            m.feature_kernel = flip_kernel_bands(&m.feature_kernel);
            if let Some(k) = &m.reverse_weight_kernel {
                m.reverse_weight_kernel = Some(flip_kernel_bands(k));
            }
            if let Some(k) = &m.reverse_feature_kernel {
                m.reverse_feature_kernel = Some(flip_kernel_bands(k));
            }
            m
        }

        let mut model = GrcnnModel::new(ModelConfig::tiny(), 17).unwrap();
        {
            let mut r = ChaCha8Rng::seed_from_u64(170);
            let w0 = model.config().widths[0];
            let in_ch = 2; // cube + noise map
            *model.entry_unit_mut() =
                GrconvUnit::bidirectional(in_ch, w0, 3, (1, 1, 1), false, MergeMode::Sum, &mut r)
                    .unwrap();
        }
        let mut mirrored = model.clone();
        mirrored.entry = mirror_unit(&model.entry);
        mirrored.exit = mirror_unit(&model.exit);
        for (i, (down, res)) in model.encoder.iter().enumerate() {
            mirrored.encoder[i] = (
                mirror_unit(down),
                ResBlock {
                    unit1: mirror_unit(&res.unit1),
                    unit2: mirror_unit(&res.unit2),
                    shortcut: mirror_unit(&res.shortcut),
                },
            );
        }
        for (j, (up, res)) in model.decoder.iter().enumerate() {
            mirrored.decoder[j] = (
                mirror_unit(up),
                ResBlock {
                    unit1: mirror_unit(&res.unit1),
                    unit2: mirror_unit(&res.unit2),
                    shortcut: mirror_unit(&res.shortcut),
                },
            );
        }

        let x = random_cube(4, 4, 5, 18);
        let bands = x.bands();
        let x_rev = HsiCube::from_fn(4, 4, bands, |b, r, c| x.get(bands - 1 - b, r, c));
        let map = NoiseLevelMap::new(20.0).unwrap();
        let out = model.forward(&x, Some(&map)).unwrap();
        let out_mirror = mirrored.forward(&x_rev, Some(&map)).unwrap();
        let mut max_err = 0.0f64;
        for b in 0..bands {
            for r in 0..4 {
                for c in 0..4 {
                    max_err = max_err
                        .max((out_mirror.get(b, r, c) - out.get(bands - 1 - b, r, c)).abs());
                }
            }
        }
        assert!(max_err <= 1e-12, "mirror mismatch {max_err}");
    }

    #[test]
    fn bidirectional_stack_swap_is_consistent() {
        // one bidirectional unit alone: reversing input bands and swapping
        // the kernel pairs (with band-flipped kernels) band-reverses the
        // stacked halves in place
        let mut r = ChaCha8Rng::seed_from_u64(19);
        let unit = GrconvUnit::bidirectional(1, 4, 3, (1, 1, 1), false, MergeMode::Stack, &mut r).unwrap();
        let x = FeatureTensor::from_fn(1, 5, 4, 4, |_, b, rr, c| (b * 16 + rr * 4 + c) as f64 * 0.01);
        let (out, _) = unit.forward(&x).unwrap();
        assert_eq!(out.channels(), 4);
        assert!(out.all_finite());
    }
}

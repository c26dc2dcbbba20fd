//! Hyperspectral image restoration toolkit.
//!
//! One ADMM driver with closed-form data-fidelity updates covers
//! super-resolution, compressed snapshot sensing, and inpainting; the prior
//! step is any Gaussian denoiser, from a trivial identity to the built-in
//! gated recurrent 3D convolutional network trained at toy scale on the CPU.
//!
//! Modules:
//! - [`cube`] / [`feature`] / [`conv`] / [`fft`]: dense tensor storage and
//!   the low-level numeric kernels.
//! - [`degrade`]: forward degradation operators and noise synthesizers.
//! - [`grcnn`]: the gated recurrent convolutional denoiser, its gradients,
//!   a toy trainer, and checkpoint I/O.
//! - [`admm`]: the plug-and-play ADMM driver, per-task closed-form updates,
//!   and task-specific initialization.
//! - [`metrics`]: PSNR / SSIM / SAM with band-wise averaging.
//! - [`synth`]: deterministic synthetic cube generation for demos and tests.

pub mod admm;
pub mod conv;
pub mod cube;
pub mod degrade;
pub mod error;
pub mod feature;
pub mod fft;
pub mod grcnn;
pub mod metrics;
pub mod synth;

pub use cube::HsiCube;
pub use error::{CheckpointError, CoreError, Result};
pub use feature::{FeatureTensor, Kernel3d, Padding};

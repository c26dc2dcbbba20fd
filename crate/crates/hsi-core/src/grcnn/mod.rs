//! Gated recurrent convolutional denoiser: units, the encoder-decoder
//! model, gradients, a toy trainer, and checkpoint I/O.

pub mod checkpoint;
pub mod model;
pub mod train;
pub mod unit;

pub use checkpoint::{load, save};
pub use model::{mse_loss, ForwardPass, GrcnnGrads, GrcnnModel, ModelConfig, NoiseLevelMap, ResBlock};
pub use train::{train, TrainConfig, TrainReport, TrainSample, Trainer};
pub use unit::{Direction, GrconvUnit, MergeMode};

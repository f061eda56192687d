//! Spectral neural operator mapping a population field to the field one
//! jump later, with the composite data/moment/equivariance loss, manual
//! reverse-mode gradients, Adam training and autoregressive rollout.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod spectral;
pub mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{data_components, loss_components, total_loss, LossComponents, LossWeights};
pub use model::{init_model, Activation, Layout, Normalizer, OperatorConfig, SpectralOperatorModel};
pub use spectral::SpectralTransform;
pub use train::{
    batch_loss, gradients, rollout, rollout_with, train, Adam, EpochRecord, GradContext, TrainConfig, TrainReport,
};

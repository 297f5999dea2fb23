//! Differentiable tensor core and the three quality architectures.
//!
//! Every layer implements its own forward and backward pass on single
//! samples; batches are processed sample by sample with gradients
//! accumulated in the parameter tensors, so runs are bit-reproducible.

mod backbone;
mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod pool;
mod tensor;
mod train;

pub use backbone::{Backbone, BackboneConfig, Block};
pub use checkpoint::{write_loss_curve, Checkpoint, ParamRecord};
pub use gradcheck::{grad_check, grad_check_kind, toy_objective, Differentiable, LinearObjective, ModelObjective};
pub use layers::{relu, Conv2d, Linear};
pub use model::{
    default_rois, image_tensor, prepare_picture, ForwardCache, Head, ModelConfig, ModelKind, QualityModel, Scores,
    Targets,
};
pub use pool::{pool_global, roi_pool, roi_window, Pooled, ROI_GRID};
pub use tensor::Tensor;
pub use train::{dataset_mse, evaluate, evaluate_predictions, train, train_model, Adam, Evaluation, LossPoint, TrainConfig, TrainSample};

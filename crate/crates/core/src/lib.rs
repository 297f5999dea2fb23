//! Picture and patch quality toolkit.
//!
//! The crate covers the full desk-scale pipeline for building and modelling a
//! subjective picture-quality database:
//!
//! * [`imgcore`]: planar float rasters, cropping, white padding, luma.
//! * [`ugcfeat`]: the six objective sampling features of a picture.
//! * [`sampler`]: histogram-matched subset selection.
//! * [`patcher`]: constrained random patch cropping.
//! * [`psychlab`]: Z-score MOS, subject rejection, SRCC/LCC, rater simulation.
//! * [`nssiqa`]: BRISQUE-style features, ridge regressor and NIQE.
//! * [`neuralq`]: a small differentiable tensor core with the Baseline,
//!   RoIPool and Feedback quality models.
//! * [`qmap`]: block quality maps and their magma overlays.
//!
//! All numerical code is generic over [`Real`]; the aliases below fix the
//! scalar to `f64` (the default everywhere) or `f32`.

pub mod error;
pub mod imgcore;
pub mod linalg;
pub mod neuralq;
pub mod nssiqa;
pub mod patcher;
pub mod psychlab;
pub mod qmap;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod ugcfeat;

pub use error::{Error, Result};
pub use imgcore::Rect;
pub use scalar::Real;

/// Current version tag written into every manifest, table and checkpoint.
pub const SCHEMA_VERSION: u32 = 1;

pub type Image = imgcore::ImageBuf<f64>;
pub type Image32 = imgcore::ImageBuf<f32>;
pub type Features = ugcfeat::FeatureVector<f64>;
pub type Histogram = sampler::Histogram<f64>;
pub type MosTable = psychlab::MosTable<f64>;
pub type NssFeatures = nssiqa::NssFeatures<f64>;
pub type NiqeModel = nssiqa::NiqeModel<f64>;
pub type Tensor = neuralq::Tensor<f64>;
pub type Tensor32 = neuralq::Tensor<f32>;
pub type QualityModel = neuralq::QualityModel<f64>;
pub type QualityMap = qmap::QualityMap<f64>;

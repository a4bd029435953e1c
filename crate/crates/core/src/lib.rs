//! Lidar point-cloud weather de-noising toolkit.
//!
//! The pipeline operates on cylindrical range images (distance + intensity
//! matrices indexed by laser ring and azimuth segment):
//!
//! * [`sensor`] / [`image`] / [`project`] — sensor geometry, range-image
//!   formation and field-of-view cropping.
//! * [`codec`] — on-disk frame container and CSV import.
//! * [`autolabel`] — reference-based weather ground truth.
//! * [`augment`] — fog and rain augmentation of clear-weather frames.
//! * [`filters`] — DROR / ROR / SOR geometric baselines.
//! * [`nnet`] — a small dense-tensor CNN engine and the WeatherNet model.
//! * [`eval`] — confusion matrices, IoU and degradation reporting.
//! * [`synth`] — procedural scene raycasting for reproducible test data.
//!
//! Core numerics are generic over the scalar type through [`scalar::Real`];
//! concrete aliases for the common instantiations live at the crate root.

pub mod autolabel;
pub mod augment;
pub mod codec;
pub mod eval;
pub mod filters;
pub mod image;
pub mod nnet;
pub mod project;
pub mod scalar;
pub mod sensor;
pub mod synth;

mod error;

pub use error::{Error, Result};
pub use image::{Label, LabelImage, RangeImage};
pub use sensor::{LidarReturn, PointCloud, SensorModel};

/// Frame scalar used by the on-disk container (32-bit little-endian floats).
pub type Frame = RangeImage<f32>;

/// Training-precision tensor.
pub type TrainTensor = nnet::Tensor4<f64>;

/// Inference-precision tensor.
pub type InferTensor = nnet::Tensor4<f32>;

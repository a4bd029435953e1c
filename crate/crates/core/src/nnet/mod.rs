//! Minimal dense-tensor neural-network engine: dilated 2D convolution,
//! channel concatenation, dropout, softmax cross-entropy and Adam —
//! enough to build, train and run the weather segmentation network.

pub mod adam;
pub mod block;
pub mod checkpoint;
pub mod conv;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use block::{predict_and_denoise, LiLaBlock, LiLaBlockSpec, WeatherNet, WeatherNetSpec};
pub use checkpoint::CheckpointHeader;
pub use conv::{Conv2d, ConvSpec};
pub use tensor::{relu, relu_backward, Tensor4};
pub use train::{
    balanced_class_weights, gradient_check, softmax, softmax_xent, softmax_xent_weighted, train,
    LossReduction, TrainConfig, TrainReport,
};

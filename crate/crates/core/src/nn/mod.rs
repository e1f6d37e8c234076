//! Small residual CNN with a global-average-pooling head, written from
//! scratch over a generic float type so gradients can be checked in f64.

mod adam;
mod checkpoint;
mod conv;
mod network;
mod scalar;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState, TrainConfig};
pub use checkpoint::{
    Checkpoint, Normalization, TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use conv::{conv2d_forward, ConvGeom};
pub use network::{argmax, softmax, Network, NetworkConfig, Param};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{train, train_with_progress, Dataset, EpochStats};

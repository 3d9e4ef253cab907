//! Siamese CNN-LSTM-attention classifier deciding whether a hypothesis
//! window contains a sample drop relative to a reference window.
//!
//! Everything is hand-written in double precision: layers with explicit
//! backward passes, binary cross-entropy, Adam, two-stage training,
//! finite-difference gradient checks and JSON checkpoints.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod param;
pub mod tensor;
pub mod train;

pub use dataset::{PairExample, PairSet};
pub use error::{NeuralError, Result};
pub use model::{HeadKind, ModelConfig, Normalizer, Preset, SiameseModel};
pub use optim::Adam;
pub use param::{Param, Parameterized};
pub use tensor::Tensor;
pub use train::{train, EpochMetrics, StageConfig, StageData, TrainConfig};

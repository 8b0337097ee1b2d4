//! Multi-stage temporal convolutional recognizer trained on frozen features.

mod model;
mod train;

pub use model::{argmax_columns, feature_input, MsTcn, MsTcnConfig};
pub use train::{cross_entropy, sequence_loss, smoothing_term, train_recognizer, Sequence, TrainConfig};

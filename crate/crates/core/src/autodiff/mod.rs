//! Dense tensors, a reverse-mode tape, parameter sets and the Adam optimizer.

pub mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

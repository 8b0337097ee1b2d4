pub mod autodiff;
pub mod contrastive;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mstcn;
pub mod prompts;
pub mod sampling;

pub use error::{Error, Result};

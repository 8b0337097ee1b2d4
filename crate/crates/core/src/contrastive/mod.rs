//! Multi-channel contrastive objective and the pre-training loop.

mod loss;
mod pretrain;
mod similarity;

pub use loss::{similarity_of, total_loss, LossBreakdown, LossVars, Sample};
pub use pretrain::{evaluate, make_batches, prepare_samples, pretrain, EpochLoss, PretrainConfig};
pub use similarity::{
    batch_similarity, channel_loss, channel_loss_var, cosine_similarity, generalized_kl, similarity_var, softmax_matrix,
    Channel, SimilarityMatrix,
};

//! Configuration and the stages of a full experiment: synthesize,
//! pre-train, extract features, train and evaluate, report.
//!
//! Each stage reads and writes plain files below one output directory, so
//! stages compose through the file system only.

mod config;
mod stages;

pub use config::{ExperimentConfig, FeatureSource, SplitScheme};
pub use stages::{
    folds, run_extract, run_pretrain, run_report, run_synth, run_train_eval, Evaluation, LOSS_FILE, MEAN_SPLIT,
    PER_CLASS_FILE, REPORT_FILE, SCORES_FILE,
};

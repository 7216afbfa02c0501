//! Pretrain, fine-tune and evaluate phases, checkpoints and file outputs.

mod checkpoint;
mod commands;
mod config;
mod metrics;
mod train;

use crate::data::DataError;
use crate::model::ModelError;

pub use checkpoint::{Checkpoint, CheckpointError, FeatureStats, Phase, TrainingHistory, FORMAT_VERSION, MAGIC};
pub use commands::{
    attention_map_images, cmd_attention_map, cmd_evaluate, cmd_extract_features, cmd_finetune, cmd_pretrain,
    cmd_synth, load_samples, write_feature_csv, write_loss_csv,
};
pub use config::TrainConfig;
pub use metrics::{roc_auc, Confusion, MetricsReport};
pub use train::{
    contrastive_batch_grads, evaluate, finetune, finetune_batch_grads, predict, pretrain, radiomics_rows,
    split_samples, EarlyStopping,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit status: 1 usage, 2 data or i/o, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) | PipelineError::Checkpoint(_) | PipelineError::Io(_) => 2,
            PipelineError::Model(ModelError::Config(_)) => 1,
            PipelineError::Model(_) => 2,
            PipelineError::Numeric(_) => 3,
        }
    }
}

impl From<crate::radiomics::RadiomicsError> for PipelineError {
    fn from(e: crate::radiomics::RadiomicsError) -> Self {
        PipelineError::Data(DataError::Invalid(e.to_string()))
    }
}

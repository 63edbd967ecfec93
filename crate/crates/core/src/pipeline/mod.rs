//! Training orchestration and inference.

mod checkpoint;
pub mod config;
mod embed;
mod step;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{ConfigError, KeyValues, Precision, Preset, TrainConfig};
pub use embed::{average_rows, embed_dataset, embed_mesh, select_closest_half, source_key, FeatureVector};
pub use step::{forward, loss_and_grad, Forward};
pub use train::{train, trace_csv, TraceRow, Trainer, TrainingSet, TRACE_HEADER};

use thiserror::Error;

use crate::losses::LossError;
use crate::mesh::MeshError;
use crate::nn::NnError;
use crate::walker::WalkError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint was written under a different configuration")]
    ConfigMismatch,
    #[error("{models} models cannot fill a batch of {batch_size}")]
    DatasetTooSmall { models: usize, batch_size: usize },
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { epoch: u64, what: String },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    AtBatch {
        epoch: u64,
        batch: usize,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

impl PipelineError {
    fn at_batch(self, epoch: u64, batch: usize) -> Self {
        PipelineError::AtBatch {
            epoch,
            batch,
            source: Box::new(self),
        }
    }

    /// True for divergence: non-finite losses, activations or gradients.
    pub fn is_numeric(&self) -> bool {
        match self {
            PipelineError::NonFinite { .. } => true,
            PipelineError::Nn(NnError::NonFinite { .. }) => true,
            PipelineError::Loss(LossError::NonFinite(_) | LossError::ZeroNorm(_)) => true,
            PipelineError::AtBatch { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

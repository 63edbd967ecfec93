//! One forward/backward pass of the full model under the combined loss.

use crate::losses::{combined_loss, ClusterState, EmbeddingBatch, LossConfig, LossOutput};
use crate::nn::{Model, Parameters};
use crate::walker::StepSequence;
use crate::Real;

use super::PipelineError;

/// Projected embeddings of `seqs` as an `f64` batch, plus everything the
/// backward pass needs.
pub struct Forward<T> {
    pub features: Vec<T>,
    pub embeddings: EmbeddingBatch,
    encoder: crate::nn::EncoderCache<T>,
    projection: crate::nn::ProjectionCache<T>,
}

pub fn forward<T: Real>(model: &Model<T>, seqs: &[StepSequence]) -> Result<Forward<T>, PipelineError> {
    let (features, encoder) = model.encoder.forward(seqs)?;
    let (projected, projection) = model.projection.forward(&features, seqs.len())?;
    let embeddings = EmbeddingBatch::new(
        seqs.len(),
        model.shape.embedding_dim(),
        projected.iter().map(|v| v.as_f64()).collect(),
    )?;
    Ok(Forward {
        features,
        embeddings,
        encoder,
        projection,
    })
}

/// Loss and parameter gradient for one walk batch. Sequences `2i` and
/// `2i + 1` must be a positive pair.
pub fn loss_and_grad<T: Real>(
    model: &Model<T>,
    seqs: &[StepSequence],
    clusters: Option<&mut ClusterState>,
    config: &LossConfig,
    epoch: u64,
) -> Result<(LossOutput, Model<T>), PipelineError> {
    let fwd = forward(model, seqs)?;
    let loss = combined_loss(&fwd.embeddings, clusters, config, epoch)?;
    if !loss.total.is_finite() {
        return Err(PipelineError::NonFinite {
            epoch,
            what: "loss".into(),
        });
    }
    let d_out: Vec<T> = loss.grads.iter().map(|&g| T::from_f64_lossy(g)).collect();
    let mut grads = model.zeros_like();
    let d_features = model.projection.backward(&fwd.projection, &d_out, &mut grads.projection)?;
    model.encoder.backward(&fwd.encoder, &d_features, &mut grads.encoder)?;
    if !grads.all_finite() {
        return Err(PipelineError::NonFinite {
            epoch,
            what: "gradient".into(),
        });
    }
    Ok((loss, grads))
}

//! Checkpoint container: parameters, optimizer moments, cluster state and
//! the config that produced them, as JSON with base64 little-endian tensor
//! payloads. Writes go to a temporary file that is renamed into place.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::config::{Precision, TrainConfig};
use super::PipelineError;
use crate::losses::ClusterState;
use crate::nn::{Model, OptimizerState, Parameters, Tensor};
use crate::Real;

const FORMAT: &str = "meshwalk-checkpoint";
const VERSION: u32 = 1;

/// In memory everything is held as `f64`; `f32` runs round-trip exactly
/// because every `f32` is representable as an `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    pub model: Model<f64>,
    pub optimizer: OptimizerState<f64>,
    pub clusters: Option<ClusterState>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct OptimizerRecord {
    step: u64,
    first_moment: Vec<TensorRecord>,
    second_moment: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    dtype: Precision,
    config_hash: String,
    config: TrainConfig,
    epoch: u64,
    parameters: Vec<TensorRecord>,
    optimizer: OptimizerRecord,
    clusters: Option<ClusterState>,
}

fn encode(name: &str, t: &Tensor<f64>, dtype: Precision) -> TensorRecord {
    let bytes = match dtype {
        Precision::F64 => f64::to_le_bytes_vec(t.data()),
        Precision::F32 => {
            let narrow: Vec<f32> = t.data().iter().map(|&v| v as f32).collect();
            f32::to_le_bytes_vec(&narrow)
        }
    };
    TensorRecord {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        data: B64.encode(bytes),
    }
}

fn decode(rec: &TensorRecord, name: &str, shape: &[usize], dtype: Precision) -> Result<Tensor<f64>, PipelineError> {
    let bad = |why: String| PipelineError::Checkpoint(format!("tensor {name}: {why}"));
    if rec.name != name {
        return Err(bad(format!("found `{}` in its place", rec.name)));
    }
    if rec.shape != shape {
        return Err(bad(format!("shape {:?}, expected {shape:?}", rec.shape)));
    }
    let bytes = B64.decode(&rec.data).map_err(|e| bad(e.to_string()))?;
    let values = match dtype {
        Precision::F64 => f64::from_le_bytes_slice(&bytes),
        Precision::F32 => f32::from_le_bytes_slice(&bytes).map(|v| v.into_iter().map(f64::from).collect()),
    }
    .ok_or_else(|| bad("payload is not a whole number of values".into()))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Tensor::new(shape.to_vec(), values).map_err(|e| bad(e.to_string()))
}

impl Checkpoint {
    pub fn from_training<T: Real>(
        config: &TrainConfig,
        epoch: u64,
        model: &Model<T>,
        optimizer: &OptimizerState<T>,
        clusters: Option<&ClusterState>,
    ) -> Self {
        let cast = |ts: &[Tensor<T>]| ts.iter().map(Tensor::cast).collect();
        Checkpoint {
            config: *config,
            epoch,
            model: model.cast(),
            optimizer: OptimizerState {
                config: optimizer.config,
                step: optimizer.step,
                first_moment: cast(&optimizer.first_moment),
                second_moment: cast(&optimizer.second_moment),
            },
            clusters: clusters.cloned(),
        }
    }

    pub fn optimizer_as<T: Real>(&self) -> OptimizerState<T> {
        let cast = |ts: &[Tensor<f64>]| ts.iter().map(Tensor::cast).collect();
        OptimizerState {
            config: self.optimizer.config,
            step: self.optimizer.step,
            first_moment: cast(&self.optimizer.first_moment),
            second_moment: cast(&self.optimizer.second_moment),
        }
    }

    pub fn to_json(&self) -> String {
        let dtype = self.config.precision;
        let named = self.model.named_tensors();
        let moments = |ts: &[Tensor<f64>]| {
            named
                .iter()
                .zip(ts)
                .map(|((n, _), t)| encode(n, t, dtype))
                .collect()
        };
        let container = Container {
            format: FORMAT.into(),
            version: VERSION,
            dtype,
            config_hash: self.config.hash(),
            config: self.config,
            epoch: self.epoch,
            parameters: named.iter().map(|(n, t)| encode(n, t, dtype)).collect(),
            optimizer: OptimizerRecord {
                step: self.optimizer.step,
                first_moment: moments(&self.optimizer.first_moment),
                second_moment: moments(&self.optimizer.second_moment),
            },
            clusters: self.clusters.clone(),
        };
        serde_json::to_string(&container).expect("checkpoint serializes")
    }

    /// Parse and validate: format tag, config hash, tensor names and
    /// shapes against the configured network, finiteness, cluster width.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let c: Container =
            serde_json::from_str(text).map_err(|e| PipelineError::Checkpoint(format!("malformed container: {e}")))?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(PipelineError::Checkpoint(format!(
                "unsupported container {} v{}",
                c.format, c.version
            )));
        }
        if c.config_hash != c.config.hash() {
            return Err(PipelineError::Checkpoint("config hash does not match the stored config".into()));
        }
        if c.dtype != c.config.precision {
            return Err(PipelineError::Checkpoint("dtype disagrees with the configured precision".into()));
        }
        let mut model = Model::<f64>::zeros(c.config.shape());
        let layout: Vec<(String, Vec<usize>)> = model
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let read_all = |recs: &[TensorRecord]| -> Result<Vec<Tensor<f64>>, PipelineError> {
            if recs.len() != layout.len() {
                return Err(PipelineError::Checkpoint(format!(
                    "{} tensors stored, network has {}",
                    recs.len(),
                    layout.len()
                )));
            }
            recs.iter()
                .zip(&layout)
                .map(|(r, (n, s))| decode(r, n, s, c.dtype))
                .collect()
        };
        let params = read_all(&c.parameters)?;
        for (dst, src) in model.tensors_mut().into_iter().zip(params) {
            *dst = src;
        }
        let optimizer = OptimizerState {
            config: c.config.adam,
            step: c.optimizer.step,
            first_moment: read_all(&c.optimizer.first_moment)?,
            second_moment: read_all(&c.optimizer.second_moment)?,
        };
        if let Some(cl) = &c.clusters {
            let dim = c.config.shape().embedding_dim();
            let consistent = cl.means.len() >= 2
                && cl.means.iter().chain(&cl.accum_sum).all(|m| m.len() == dim)
                && cl.accum_sum.len() == cl.means.len()
                && cl.accum_count.len() == cl.means.len()
                && cl.means.iter().flatten().all(|v| v.is_finite());
            if !consistent {
                return Err(PipelineError::Checkpoint("cluster state does not fit the network".into()));
            }
        }
        Ok(Checkpoint {
            config: c.config,
            epoch: c.epoch,
            model,
            optimizer,
            clusters: c.clusters,
        })
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let io = |e: std::io::Error| PipelineError::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, self.to_json()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

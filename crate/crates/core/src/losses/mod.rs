//! Training losses on projected embeddings: NT-Xent over positive walk
//! pairs and a K-means (within-cluster sum of squares) clustering loss.

mod kmeans;
mod ntxent;

pub use kmeans::{assign_pair, kmeans_init, kmeans_loss, wcss, ClusterState};
pub use ntxent::{cosine_sim, nt_xent};


use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("embedding row {0} has zero norm")]
    ZeroNorm(usize),
    #[error("embedding batch has {0} rows; positive pairs need an even count")]
    OddRows(usize),
    #[error("embedding data length {len} does not match {rows} x {dim}")]
    Shape { rows: usize, dim: usize, len: usize },
    #[error("embedding row {0} is not finite")]
    NonFinite(usize),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("need at least {k} samples to seed {k} means, got {n}")]
    SampleTooSmall { k: usize, n: usize },
    #[error("assignment {index} for pair {pair} is out of range ({clusters} clusters)")]
    AssignmentOutOfRange {
        pair: usize,
        index: usize,
        clusters: usize,
    },
    #[error("{got} assignments for {pairs} pairs")]
    AssignmentCount { pairs: usize, got: usize },
    #[error("clustering loss requested but the means are not initialised")]
    ClustersUninitialized,
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

/// `2N` embeddings, row-major; rows `2i` and `2i + 1` form positive pair `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingBatch {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if data.len() != rows * dim {
            return Err(LossError::Shape {
                rows,
                dim,
                len: data.len(),
            });
        }
        if rows % 2 != 0 {
            return Err(LossError::OddRows(rows));
        }
        if let Some(bad) = data.chunks_exact(dim.max(1)).position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(LossError::NonFinite(bad));
        }
        Ok(EmbeddingBatch { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LossError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(LossError::DimMismatch(dim, r.len()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> usize {
        self.rows / 2
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rows scaled to unit length.
    pub fn normalized(&self) -> Result<EmbeddingBatch, LossError> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let n = l2(row);
            if n == 0.0 {
                return Err(LossError::ZeroNorm(i));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Ok(EmbeddingBatch {
            rows: self.rows,
            dim: self.dim,
            data,
        })
    }
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Chain `dL/du` through `u = z / |z|` for each row.
pub fn normalize_backward(raw: &EmbeddingBatch, unit: &EmbeddingBatch, d_unit: &[f64]) -> Vec<f64> {
    let dim = raw.dim;
    let mut out = vec![0.0; d_unit.len()];
    for i in 0..raw.rows {
        let n = l2(raw.row(i));
        let u = unit.row(i);
        let du = &d_unit[i * dim..(i + 1) * dim];
        let proj: f64 = u.iter().zip(du).map(|(a, b)| a * b).sum();
        for k in 0..dim {
            out[i * dim + k] = (du[k] - proj * u[k]) / n;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub alpha: f64,
    pub clusters: usize,
    pub cluster_start_epoch: u64,
    pub means_update_period: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: 0.5,
            alpha: 1.0,
            clusters: 80,
            cluster_start_epoch: 50,
            means_update_period: 5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.temperature > 0.0) {
            return Err(LossError::Config("temperature must be positive".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(LossError::Config("alpha must be non-negative".into()));
        }
        if self.clusters < 2 {
            return Err(LossError::Config("at least 2 clusters are required".into()));
        }
        if self.means_update_period < 1 {
            return Err(LossError::Config("means update period must be at least 1".into()));
        }
        Ok(())
    }

    pub fn clustering_active(&self, epoch: u64) -> bool {
        epoch >= self.cluster_start_epoch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub nt_xent: f64,
    pub kmeans: f64,
    pub total: f64,
    /// `dL/dz` for every raw (unnormalised) embedding row.
    pub grads: Vec<f64>,
}

/// `NT-Xent + alpha * KMeans` once clustering is active, NT-Xent alone
/// before. When active, pairs are assigned against the current means and
/// the (detached) unit embeddings are added to the accumulators.
pub fn combined_loss(
    batch: &EmbeddingBatch,
    clusters: Option<&mut ClusterState>,
    config: &LossConfig,
    epoch: u64,
) -> Result<LossOutput, LossError> {
    let (nt, mut grads) = nt_xent(batch, config.temperature)?;
    if !config.clustering_active(epoch) {
        return Ok(LossOutput {
            nt_xent: nt,
            kmeans: 0.0,
            total: nt,
            grads,
        });
    }
    let state = clusters.ok_or(LossError::ClustersUninitialized)?;
    let unit = batch.normalized()?;
    let assignments: Vec<usize> = (0..unit.pairs())
        .map(|p| assign_pair(unit.row(2 * p), unit.row(2 * p + 1), &state.means))
        .collect();
    let (km, d_unit) = kmeans_loss(&unit, &assignments, &state.means)?;
    for (p, &c) in assignments.iter().enumerate() {
        state.accumulate(unit.row(2 * p), c);
        state.accumulate(unit.row(2 * p + 1), c);
    }
    let d_raw = normalize_backward(batch, &unit, &d_unit);
    for (g, d) in grads.iter_mut().zip(&d_raw) {
        *g += config.alpha * d;
    }
    Ok(LossOutput {
        nt_xent: nt,
        kmeans: km,
        total: nt + config.alpha * km,
        grads,
    })
}

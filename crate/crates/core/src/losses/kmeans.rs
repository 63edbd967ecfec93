//! K-means clustering loss: k-means++ seeding, pair assignment, the WCSS
//! loss itself and the periodic means update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sq_dist, EmbeddingBatch, LossError};

/// Cluster means plus the accumulators filled between scheduled updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub means: Vec<Vec<f64>>,
    pub accum_sum: Vec<Vec<f64>>,
    pub accum_count: Vec<u64>,
    /// Every embedding accumulated since the last update; used to re-seed
    /// clusters that received no assignments.
    pub accum_rows: Vec<Vec<f64>>,
    pub epoch_of_last_update: Option<u64>,
}

impl ClusterState {
    pub fn new(means: Vec<Vec<f64>>) -> Self {
        let dim = means.first().map_or(0, Vec::len);
        ClusterState {
            accum_sum: vec![vec![0.0; dim]; means.len()],
            accum_count: vec![0; means.len()],
            accum_rows: Vec::new(),
            means,
            epoch_of_last_update: None,
        }
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn accumulate(&mut self, row: &[f64], cluster: usize) {
        for (s, v) in self.accum_sum[cluster].iter_mut().zip(row) {
            *s += v;
        }
        self.accum_count[cluster] += 1;
        self.accum_rows.push(row.to_vec());
    }

    /// Replace each mean by the average of the rows assigned to it since the
    /// last update. Clusters that received nothing are moved onto the
    /// accumulated row farthest from its nearest mean. Accumulators are
    /// cleared afterwards.
    pub fn update_means(&mut self, epoch: u64) {
        let empty: Vec<usize> = (0..self.k()).filter(|&c| self.accum_count[c] == 0).collect();
        for c in 0..self.k() {
            let n = self.accum_count[c];
            if n > 0 {
                self.means[c] = self.accum_sum[c].iter().map(|s| s / n as f64).collect();
            }
        }
        for c in empty {
            let farthest = self
                .accum_rows
                .iter()
                .map(|r| {
                    let nearest = self
                        .means
                        .iter()
                        .map(|m| sq_dist(r, m))
                        .fold(f64::INFINITY, f64::min);
                    (r, nearest)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((row, _)) = farthest {
                self.means[c] = row.clone();
            }
        }
        let dim = self.dim();
        self.accum_sum = vec![vec![0.0; dim]; self.k()];
        self.accum_count = vec![0; self.k()];
        self.accum_rows.clear();
        self.epoch_of_last_update = Some(epoch);
    }
}

/// k-means++ seeding: the first mean is a uniform draw, each further mean
/// is drawn with probability proportional to its squared distance from the
/// nearest mean chosen so far.
pub fn kmeans_init<R: Rng + ?Sized>(
    sample: &[Vec<f64>],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, LossError> {
    if k == 0 || sample.len() < k {
        return Err(LossError::SampleTooSmall { k, n: sample.len() });
    }
    let mut means = vec![sample[rng.random_range(0..sample.len())].clone()];
    let mut nearest: Vec<f64> = sample.iter().map(|x| sq_dist(x, &means[0])).collect();
    while means.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = nearest.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..sample.len())
        };
        let mean = sample[pick].clone();
        for (d, x) in nearest.iter_mut().zip(sample) {
            *d = d.min(sq_dist(x, &mean));
        }
        means.push(mean);
    }
    Ok(means)
}

/// Index of the mean closest to either member of the pair; ties go to the
/// lowest index.
pub fn assign_pair(x1: &[f64], x2: &[f64], means: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in means.iter().enumerate() {
        let d = sq_dist(x1, m).min(sq_dist(x2, m));
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Within-cluster sum of squares over all rows, divided by the row count.
/// Both rows of pair `i` use mean `assignments[i]`; means get no gradient.
pub fn kmeans_loss(
    batch: &EmbeddingBatch,
    assignments: &[usize],
    means: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), LossError> {
    if assignments.len() != batch.pairs() {
        return Err(LossError::AssignmentCount {
            pairs: batch.pairs(),
            got: assignments.len(),
        });
    }
    let rows = batch.rows();
    let dim = batch.dim();
    let mut grads = vec![0.0; rows * dim];
    if rows == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / rows as f64;
    let mut loss = 0.0;
    for (pair, &c) in assignments.iter().enumerate() {
        let mean = means.get(c).ok_or(LossError::AssignmentOutOfRange {
            pair,
            index: c,
            clusters: means.len(),
        })?;
        if mean.len() != dim {
            return Err(LossError::DimMismatch(dim, mean.len()));
        }
        for row in [2 * pair, 2 * pair + 1] {
            let x = batch.row(row);
            for k in 0..dim {
                let d = x[k] - mean[k];
                loss += d * d;
                grads[row * dim + k] = 2.0 * d * scale;
            }
        }
    }
    Ok((loss * scale, grads))
}

/// Plain within-cluster sum of squares for per-row assignments.
pub fn wcss(rows: &[Vec<f64>], assignments: &[usize], means: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(assignments)
        .map(|(r, &c)| sq_dist(r, &means[c]))
        .sum()
}

//! Random surface walks and paired walk batches.
//!
//! A walk starts at a uniformly random vertex and moves to a random
//! unvisited neighbour at each step. With probability `jump_prob`, or when
//! every neighbour has already been visited, it jumps to a uniformly random
//! vertex instead.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Adjacency, Mesh, Point};
use crate::rng::{self, StreamRng};

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("walk length must be at least 2, got {0}")]
    TooShort(usize),
    #[error("jump probability must lie in [0, 1], got {0}")]
    JumpProbability(f64),
    #[error("walk visits vertex {index} but the surface has {count} vertices")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("batch of {requested} models requested from {available} distinct source ids")]
    NotEnoughModels { requested: usize, available: usize },
    #[error("model '{0}' has no surfaces to walk on")]
    NoSurfaces(String),
    #[error("surface has no vertices")]
    EmptySurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub length: usize,
    pub jump_prob: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            length: 128,
            jump_prob: 0.05,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.length < 2 {
            return Err(WalkError::TooShort(self.length));
        }
        // p = 1 is accepted: it degenerates to independent uniform samples.
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return Err(WalkError::JumpProbability(self.jump_prob));
        }
        Ok(())
    }
}

/// The part of a mesh a walk needs: positions and vertex adjacency. Faces
/// and labels are deliberately absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub vertices: Vec<Point>,
    pub adjacency: Adjacency,
}

impl Surface {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        Surface {
            vertices: mesh.vertices.clone(),
            adjacency: mesh.adjacency(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walk {
    pub vertex_indices: Vec<usize>,
    /// `true` where the step was a jump rather than an edge move. The first
    /// step always counts as a jump.
    pub jump_flags: Vec<bool>,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.vertex_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_indices.is_empty()
    }

    /// Every non-jump step follows a mesh edge.
    pub fn is_edge_valid(&self, adj: &Adjacency) -> bool {
        self.vertex_indices
            .windows(2)
            .zip(&self.jump_flags[1..])
            .all(|(w, &jump)| jump || adj.contains(w[0], w[1]))
    }
}

/// Per-step XYZ inputs for the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSequence {
    pub steps: Vec<Point>,
}

impl StepSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `2N` sequences; sequences `2i` and `2i + 1` are the positive pair for
/// `pair_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkBatch {
    pub sequences: Vec<StepSequence>,
    pub pair_ids: Vec<String>,
}

impl WalkBatch {
    pub fn pairs(&self) -> usize {
        self.pair_ids.len()
    }
}

pub fn random_walk<R: Rng + ?Sized>(
    surface: &Surface,
    config: &WalkConfig,
    rng: &mut R,
) -> Result<Walk, WalkError> {
    config.validate()?;
    let n = surface.vertex_count();
    if n == 0 {
        return Err(WalkError::EmptySurface);
    }
    let mut visited = vec![false; n];
    let mut vertex_indices = Vec::with_capacity(config.length);
    let mut jump_flags = Vec::with_capacity(config.length);

    let mut current = rng.random_range(0..n);
    visited[current] = true;
    vertex_indices.push(current);
    jump_flags.push(true);

    let mut candidates = Vec::new();
    for _ in 1..config.length {
        let jump_roll: f64 = rng.random();
        candidates.clear();
        candidates.extend(
            surface
                .adjacency
                .of(current)
                .iter()
                .copied()
                .filter(|&w| !visited[w]),
        );
        let jump = jump_roll < config.jump_prob || candidates.is_empty();
        current = if jump {
            rng.random_range(0..n)
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        visited[current] = true;
        vertex_indices.push(current);
        jump_flags.push(jump);
    }
    Ok(Walk {
        vertex_indices,
        jump_flags,
    })
}

pub fn walk_to_sequence(vertices: &[Point], walk: &Walk) -> Result<StepSequence, WalkError> {
    let steps = walk
        .vertex_indices
        .iter()
        .map(|&i| {
            vertices.get(i).copied().ok_or(WalkError::IndexOutOfRange {
                index: i,
                count: vertices.len(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(StepSequence { steps })
}

/// All face-count variants of one source model.
#[derive(Debug, Clone)]
pub struct ModelSurfaces {
    pub source_id: String,
    pub surfaces: Vec<Surface>,
}

/// Two walks on one model, each on an independently chosen variant, drawn
/// from the stream keyed by `keys`.
pub fn walk_pair(
    model: &ModelSurfaces,
    config: &WalkConfig,
    master_seed: u64,
    keys: &[u64],
) -> Result<[StepSequence; 2], WalkError> {
    if model.surfaces.is_empty() {
        return Err(WalkError::NoSurfaces(model.source_id.clone()));
    }
    let one = |walk_index: u64| -> Result<StepSequence, WalkError> {
        let mut path = keys.to_vec();
        path.push(walk_index);
        let mut rng = rng::stream(master_seed, &path);
        let surface = &model.surfaces[rng.random_range(0..model.surfaces.len())];
        let walk = random_walk(surface, config, &mut rng)?;
        walk_to_sequence(&surface.vertices, &walk)
    };
    Ok([one(0)?, one(1)?])
}

/// Build the walk batch for the given models (indices into `dataset`).
/// Walk streams are keyed by `(master_seed, epoch, model index, walk index)`.
pub fn batch_for_models(
    dataset: &[ModelSurfaces],
    model_indices: &[usize],
    config: &WalkConfig,
    master_seed: u64,
    epoch: u64,
) -> Result<WalkBatch, WalkError> {
    let make = |&m: &usize| walk_pair(&dataset[m], config, master_seed, &[rng::domain::WALK, epoch, m as u64]);
    #[cfg(feature = "parallel")]
    let pairs: Vec<_> = {
        use rayon::prelude::*;
        model_indices.par_iter().map(make).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<_> = model_indices.iter().map(make).collect::<Result<_, _>>()?;

    let mut sequences = Vec::with_capacity(2 * pairs.len());
    for [a, b] in pairs {
        sequences.push(a);
        sequences.push(b);
    }
    Ok(WalkBatch {
        sequences,
        pair_ids: model_indices
            .iter()
            .map(|&m| dataset[m].source_id.clone())
            .collect(),
    })
}

/// Sample `batch_size` distinct models without replacement and walk each
/// twice.
pub fn make_batch<R: Rng + ?Sized>(
    dataset: &[ModelSurfaces],
    batch_size: usize,
    config: &WalkConfig,
    rng: &mut R,
) -> Result<WalkBatch, WalkError> {
    config.validate()?;
    let mut ids: Vec<&str> = dataset.iter().map(|m| m.source_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != dataset.len() || dataset.len() < batch_size {
        return Err(WalkError::NotEnoughModels {
            requested: batch_size,
            available: ids.len(),
        });
    }
    let picked = sample(rng, dataset.len(), batch_size).into_vec();
    let seed: u64 = rng.random();
    batch_for_models(dataset, &picked, config, seed, rng::domain::BATCH)
}

/// JSON-lines record used by `walks dump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkRecord {
    pub source_id: String,
    pub seed: u64,
    pub vertices: Vec<usize>,
    pub jumps: Vec<bool>,
}

pub fn seeded_walk(surface: &Surface, config: &WalkConfig, seed: u64) -> Result<Walk, WalkError> {
    let mut rng: StreamRng = rng::stream(seed, &[rng::domain::WALK]);
    random_walk(surface, config, &mut rng)
}

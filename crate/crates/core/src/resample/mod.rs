//! Face-count augmentations: every model is brought to a fixed set of face
//! budgets (1K/2K/4K by default) while keeping its source id.

mod qem;

pub use qem::simplify;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Face, Mesh, MeshError, Point};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("target {target} is not below the current face count {current}")]
    TargetNotBelow { target: usize, current: usize },
    #[error("cannot reach {target} faces without degenerate geometry; best achievable is {best}")]
    Unreachable { target: usize, best: usize },
    #[error("invalid resample targets: {0}")]
    InvalidTargets(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleTargets {
    pub face_counts: Vec<usize>,
    /// Allowed fractional deviation of the achieved face count.
    pub tolerance: f64,
}

impl Default for ResampleTargets {
    fn default() -> Self {
        ResampleTargets {
            face_counts: vec![1000, 2000, 4000],
            tolerance: 0.02,
        }
    }
}

impl ResampleTargets {
    pub fn new(face_counts: Vec<usize>, tolerance: f64) -> Result<Self, ResampleError> {
        let t = ResampleTargets {
            face_counts,
            tolerance,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ResampleError> {
        if self.face_counts.is_empty() {
            return Err(ResampleError::InvalidTargets("no face counts".into()));
        }
        if self.face_counts.iter().any(|&c| c == 0) {
            return Err(ResampleError::InvalidTargets(
                "face counts must be positive".into(),
            ));
        }
        if self.face_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ResampleError::InvalidTargets(
                "face counts must be sorted ascending".into(),
            ));
        }
        if !(self.tolerance >= 0.0 && self.tolerance < 1.0) {
            return Err(ResampleError::InvalidTargets(format!(
                "tolerance {} outside [0, 1)",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub fn accepts(&self, target: usize, achieved: usize) -> bool {
        (achieved as f64 - target as f64).abs() <= self.tolerance * target as f64
    }
}

/// Midpoint subdivision: every triangle becomes four, edge midpoints are
/// shared between neighbouring faces.
pub fn subdivide(mesh: &Mesh) -> Mesh {
    let mut vertices: Vec<Point> = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| {
        *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
            let p = [0, 1, 2].map(|k| 0.5 * (vertices[a][k] + vertices[b][k]));
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut faces: Vec<Face> = Vec::with_capacity(mesh.faces.len() * 4);
    for &[a, b, c] in &mesh.faces {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    Mesh {
        vertices,
        faces,
        source_id: mesh.source_id.clone(),
        label: mesh.label.clone(),
    }
}

/// One output per target face count. Meshes coarser than a target are
/// subdivided until they exceed it and then simplified down.
pub fn resample_to(mesh: &Mesh, targets: &ResampleTargets) -> Result<Vec<Mesh>, ResampleError> {
    mesh.validate()?;
    targets.validate()?;
    targets
        .face_counts
        .iter()
        .map(|&target| resample_one(mesh, target, targets))
        .collect()
}

fn resample_one(mesh: &Mesh, target: usize, targets: &ResampleTargets) -> Result<Mesh, ResampleError> {
    if targets.accepts(target, mesh.face_count()) {
        return Ok(mesh.clone());
    }
    let mut current = mesh.clone();
    while current.face_count() < target {
        current = subdivide(&current);
    }
    if targets.accepts(target, current.face_count()) {
        return Ok(current);
    }
    let out = simplify(&current, target)?;
    if !targets.accepts(target, out.face_count()) {
        return Err(ResampleError::Unreachable {
            target,
            best: out.face_count(),
        });
    }
    Ok(out)
}

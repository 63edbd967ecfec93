//! Triangle meshes: validation, adjacency, normalisation, file formats and
//! synthetic primitives.

mod io;
mod synth;

pub use io::{parse_mesh, read_mesh_file, write_mesh, write_mesh_file, MeshFormat, ParseError};
pub use synth::{gen_synthetic, Rotation, ShapeClass, ShapeParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = [f64; 3];
pub type Face = [usize; 3];

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("mesh has no faces")]
    NoFaces,
    #[error("mesh has {0} vertices, at least 3 are required")]
    TooFewVertices(usize),
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {0} repeats a vertex index")]
    DegenerateFace(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("all vertices coincide; cannot normalise")]
    Coincident,
    #[error("invalid shape parameter: {0}")]
    InvalidParameter(String),
}

/// A triangle mesh together with the identifier of the model it came from.
///
/// `label` is carried for evaluation only. Nothing in the training path reads
/// it; see [`crate::pipeline::TrainingSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<Face>,
    pub source_id: String,
    pub label: Option<String>,
}

impl Mesh {
    /// Build a mesh and check its invariants.
    pub fn new(
        vertices: Vec<Point>,
        faces: Vec<Face>,
        source_id: impl Into<String>,
    ) -> Result<Self, MeshError> {
        let mesh = Mesh {
            vertices,
            faces,
            source_id: source_id.into(),
            label: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::NoFaces);
        }
        if self.vertices.len() < 3 {
            return Err(MeshError::TooFewVertices(self.vertices.len()));
        }
        let count = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &index in f {
                if index >= count {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index,
                        count,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        Ok(())
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for k in 0..3 {
                c[k] += v[k];
            }
        }
        c.map(|x| x / n)
    }

    /// Largest distance of any vertex from the origin.
    pub fn max_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| norm(v))
            .fold(0.0, f64::max)
    }

    /// Largest distance of any vertex from the vertex centroid.
    pub fn bounding_radius(&self) -> f64 {
        self.radius_about(&self.centroid())
    }

    /// Largest distance of any vertex from `center`. Comparing a resampled
    /// mesh against its source should use the source's centroid: the vertex
    /// centroid drifts with vertex density even when the surface does not.
    pub fn radius_about(&self, center: &Point) -> f64 {
        self.vertices
            .iter()
            .map(|v| norm(&sub(v, center)))
            .fold(0.0, f64::max)
    }

    pub fn adjacency(&self) -> Adjacency {
        build_adjacency(self)
    }
}

/// Per-vertex sorted neighbour lists derived from face edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn of(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.neighbors
            .get(a)
            .is_some_and(|n| n.binary_search(&b).is_ok())
    }
}

pub fn build_adjacency(mesh: &Mesh) -> Adjacency {
    let mut neighbors = vec![Vec::new(); mesh.vertices.len()];
    for f in &mesh.faces {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    Adjacency { neighbors }
}

/// Translate the vertex centroid to the origin and scale so the farthest
/// vertex sits at radius 1. Connectivity is untouched.
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh, MeshError> {
    mesh.validate()?;
    let c = mesh.centroid();
    let centered: Vec<Point> = mesh.vertices.iter().map(|v| sub(v, &c)).collect();
    let radius = centered.iter().map(norm).fold(0.0, f64::max);
    if !(radius > 1e-12) {
        return Err(MeshError::Coincident);
    }
    let mut out = mesh.clone();
    out.vertices = centered
        .into_iter()
        .map(|v| v.map(|x| x / radius))
        .collect();
    Ok(out)
}

#[inline]
pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three things can be poked at interactively: random walks on a synthetic
//! mesh, quadric-error simplification of that mesh, and how the NT-Xent
//! loss of a toy batch responds to the temperature.

use meshwalk::losses::{nt_xent, EmbeddingBatch};
use meshwalk::mesh::{gen_synthetic, normalize_mesh, ShapeClass, ShapeParams};
use meshwalk::resample::simplify;
use meshwalk::rng;
use meshwalk::walker::{seeded_walk, Surface, WalkConfig};
use meshwalk::Mesh;
use rand::Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A normalized mesh held on the Rust side.
#[wasm_bindgen]
pub struct DemoMesh {
    mesh: Mesh,
    surface: Surface,
}

impl DemoMesh {
    fn wrap(mesh: Mesh) -> Result<DemoMesh, JsError> {
        let mesh = normalize_mesh(&mesh).map_err(js_err)?;
        let surface = Surface::from_mesh(&mesh);
        Ok(DemoMesh { mesh, surface })
    }
}

#[wasm_bindgen]
impl DemoMesh {
    /// `class` is one of sphere, box, cylinder, torus, cone.
    #[wasm_bindgen(constructor)]
    pub fn new(class: &str, seed: u64) -> Result<DemoMesh, JsError> {
        let class: ShapeClass = class.parse().map_err(|e: String| JsError::new(&e))?;
        DemoMesh::wrap(gen_synthetic(class, &ShapeParams::default(), seed).map_err(js_err)?)
    }

    #[wasm_bindgen(js_name = faceCount)]
    pub fn face_count(&self) -> usize {
        self.mesh.face_count()
    }

    #[wasm_bindgen(js_name = vertexCount)]
    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Flat `x, y, z` per vertex.
    pub fn positions(&self) -> Vec<f32> {
        self.mesh.vertices.iter().flat_map(|v| v.map(|c| c as f32)).collect()
    }

    /// Flat vertex index triples.
    pub fn triangles(&self) -> Vec<u32> {
        self.mesh.faces.iter().flat_map(|f| f.map(|i| i as u32)).collect()
    }

    pub fn walk(&self, length: usize, jump_prob: f64, seed: u64) -> Result<DemoWalk, JsError> {
        let walk = seeded_walk(&self.surface, &WalkConfig { length, jump_prob }, seed).map_err(js_err)?;
        Ok(DemoWalk {
            vertices: walk.vertex_indices.iter().map(|&v| v as u32).collect(),
            jumps: walk.jump_flags.iter().map(|&j| j as u8).collect(),
        })
    }

    /// A simplified copy with about `target` faces.
    pub fn simplify(&self, target: usize) -> Result<DemoMesh, JsError> {
        DemoMesh::wrap(simplify(&self.mesh, target).map_err(js_err)?)
    }
}

#[wasm_bindgen]
pub struct DemoWalk {
    vertices: Vec<u32>,
    jumps: Vec<u8>,
}

#[wasm_bindgen]
impl DemoWalk {
    pub fn vertices(&self) -> Vec<u32> {
        self.vertices.clone()
    }

    /// 1 where the step was a jump.
    pub fn jumps(&self) -> Vec<u8> {
        self.jumps.clone()
    }
}

/// NT-Xent of a toy batch at each temperature in `temperatures`. The batch
/// has `pairs` random unit anchors in `dim` dimensions; each positive is
/// its anchor plus uniform noise of amplitude `noise`.
#[wasm_bindgen(js_name = ntXentCurve)]
pub fn nt_xent_curve(pairs: usize, dim: usize, noise: f64, seed: u64, temperatures: Vec<f64>) -> Result<Vec<f64>, JsError> {
    if pairs == 0 || dim == 0 {
        return Err(JsError::new("need at least one pair and one dimension"));
    }
    let mut r = rng::stream(seed, &[]);
    let mut rows = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let anchor: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let positive: Vec<f64> = anchor.iter().map(|a| a + noise * r.random_range(-1.0..1.0)).collect();
        rows.push(anchor);
        rows.push(positive);
    }
    let batch = EmbeddingBatch::from_rows(&rows).map_err(js_err)?;
    temperatures
        .iter()
        .map(|&t| nt_xent(&batch, t).map(|(loss, _)| loss).map_err(js_err))
        .collect()
}

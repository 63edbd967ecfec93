//! Quadric error metric edge collapse.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::ResampleError;
use crate::mesh::{add, cross, dot, norm, scale, sub, Face, Mesh, Point};

/// Symmetric 4x4 quadric stored as its upper triangle.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: &Point, d: f64, weight: f64) -> Self {
        let [a, b, c] = *n;
        Quadric(
            [
                a * a,
                a * b,
                a * c,
                a * d,
                b * b,
                b * c,
                b * d,
                c * c,
                c * d,
                d * d,
            ]
            .map(|x| x * weight),
        )
    }

    fn add(&self, o: &Quadric) -> Quadric {
        let mut q = self.0;
        for (x, y) in q.iter_mut().zip(o.0.iter()) {
            *x += y;
        }
        Quadric(q)
    }

    fn error(&self, p: &Point) -> f64 {
        let q = &self.0;
        let [x, y, z] = *p;
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimiser of the quadric, if the 3x3 block is well conditioned.
    fn optimum(&self) -> Option<Point> {
        let q = &self.0;
        let m = [[q[0], q[1], q[2]], [q[1], q[4], q[5]], [q[2], q[5], q[7]]];
        let rhs = [-q[3], -q[6], -q[8]];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let trace = m[0][0] + m[1][1] + m[2][2];
        if !(det.abs() > 1e-10 * trace.powi(3).max(1e-300)) {
            return None;
        }
        let col = |k: usize| {
            let mut mk = m;
            for r in 0..3 {
                mk[r][k] = rhs[r];
            }
            mk[0][0] * (mk[1][1] * mk[2][2] - mk[1][2] * mk[2][1])
                - mk[0][1] * (mk[1][0] * mk[2][2] - mk[1][2] * mk[2][0])
                + mk[0][2] * (mk[1][0] * mk[2][1] - mk[1][1] * mk[2][0])
        };
        Some([col(0) / det, col(1) / det, col(2) / det])
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    stamp_u: u32,
    stamp_v: u32,
    target: Point,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Reversed: BinaryHeap pops the cheapest collapse first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.u, other.v).cmp(&(self.u, self.v)))
    }
}

struct Simplifier {
    positions: Vec<Point>,
    faces: Vec<Face>,
    face_alive: Vec<bool>,
    vertex_alive: Vec<bool>,
    incident: Vec<Vec<usize>>,
    quadrics: Vec<Quadric>,
    stamps: Vec<u32>,
    alive_faces: usize,
    heap: BinaryHeap<Candidate>,
}

impl Simplifier {
    fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertices.len();
        let mut incident = vec![Vec::new(); n];
        let mut quadrics = vec![Quadric::default(); n];
        for (fi, f) in mesh.faces.iter().enumerate() {
            let (a, b, c) = (mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
            let nrm = cross(&sub(&b, &a), &sub(&c, &a));
            let len = norm(&nrm);
            if len > 0.0 {
                let unit = scale(&nrm, 1.0 / len);
                // Area-weighted plane quadric.
                let q = Quadric::from_plane(&unit, -dot(&unit, &a), 0.5 * len);
                for &vi in f {
                    quadrics[vi] = quadrics[vi].add(&q);
                }
            }
            for &vi in f {
                incident[vi].push(fi);
            }
        }
        Simplifier {
            positions: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vertex_alive: vec![true; n],
            incident,
            quadrics,
            stamps: vec![0; n],
            alive_faces: mesh.faces.len(),
            heap: BinaryHeap::new(),
        }
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.incident[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn push_candidate(&mut self, u: usize, v: usize) {
        let (u, v) = (u.min(v), u.max(v));
        let q = self.quadrics[u].add(&self.quadrics[v]);
        let (pu, pv) = (self.positions[u], self.positions[v]);
        let mid = scale(&add(&pu, &pv), 0.5);
        let edge = norm(&sub(&pu, &pv));
        let mut options = vec![pu, pv, mid];
        if let Some(opt) = q.optimum() {
            // Far-off optima come from near-singular quadrics.
            if norm(&sub(&opt, &mid)) <= edge {
                options.insert(0, opt);
            }
        }
        let (target, cost) = options
            .into_iter()
            .map(|p| (p, q.error(&p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        self.heap.push(Candidate {
            cost: cost.max(0.0),
            u,
            v,
            stamp_u: self.stamps[u],
            stamp_v: self.stamps[v],
            target,
        });
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.vertex_alive[c.u]
            && self.vertex_alive[c.v]
            && self.stamps[c.u] == c.stamp_u
            && self.stamps[c.v] == c.stamp_v
    }

    /// Check the link condition, normal flips and duplicate faces for the
    /// collapse of `v` into `u` at `target`.
    fn collapse_allowed(&self, u: usize, v: usize, target: &Point) -> bool {
        let shared: Vec<usize> = self.incident[u]
            .iter()
            .copied()
            .filter(|f| self.faces[*f].contains(&v))
            .collect();
        if shared.is_empty() {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        if common != shared.len() {
            return false;
        }
        let mut resulting: Vec<[usize; 3]> = Vec::new();
        for &f in self.incident[u].iter().chain(self.incident[v].iter()) {
            if shared.contains(&f) {
                continue;
            }
            let face = self.faces[f];
            let old = face.map(|i| self.positions[i]);
            let new = face.map(|i| if i == u || i == v { *target } else { self.positions[i] });
            let n_old = cross(&sub(&old[1], &old[0]), &sub(&old[2], &old[0]));
            let n_new = cross(&sub(&new[1], &new[0]), &sub(&new[2], &new[0]));
            let (l_old, l_new) = (norm(&n_old), norm(&n_new));
            if l_new <= 1e-12 * l_old.max(1e-300) || l_new == 0.0 {
                return false;
            }
            if dot(&n_old, &n_new) <= 0.05 * l_old * l_new {
                return false;
            }
            let mut key = face.map(|i| if i == v { u } else { i });
            key.sort_unstable();
            resulting.push(key);
        }
        resulting.sort_unstable();
        let before = resulting.len();
        resulting.dedup();
        before == resulting.len()
    }

    fn collapse(&mut self, u: usize, v: usize, target: Point) {
        let v_faces = std::mem::take(&mut self.incident[v]);
        for &f in &v_faces {
            if self.faces[f].contains(&u) {
                self.face_alive[f] = false;
                self.alive_faces -= 1;
            } else {
                for i in self.faces[f].iter_mut() {
                    if *i == v {
                        *i = u;
                    }
                }
                self.incident[u].push(f);
            }
        }
        let alive = &self.face_alive;
        self.incident[u].retain(|&f| alive[f]);
        self.vertex_alive[v] = false;
        self.positions[u] = target;
        self.quadrics[u] = self.quadrics[u].add(&self.quadrics[v]);
        self.stamps[u] += 1;
        for w in self.neighbors(u) {
            let faces = std::mem::take(&mut self.incident[w]);
            self.incident[w] = faces.into_iter().filter(|&f| self.face_alive[f]).collect();
            self.push_candidate(u, w);
        }
    }

    fn into_mesh(self, template: &Mesh) -> Mesh {
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(self.alive_faces);
        for (f, alive) in self.faces.iter().zip(&self.face_alive) {
            if !alive {
                continue;
            }
            let mapped = f.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = vertices.len();
                    vertices.push(self.positions[i]);
                }
                remap[i]
            });
            faces.push(mapped);
        }
        Mesh {
            vertices,
            faces,
            source_id: template.source_id.clone(),
            label: template.label.clone(),
        }
    }
}

/// Collapse edges in order of quadric error until at most `target_faces`
/// remain. Collapses that fold a face over, break the link condition or
/// duplicate a face are skipped.
pub fn simplify(mesh: &Mesh, target_faces: usize) -> Result<Mesh, ResampleError> {
    mesh.validate()?;
    if target_faces == 0 || target_faces >= mesh.face_count() {
        return Err(ResampleError::TargetNotBelow {
            target: target_faces,
            current: mesh.face_count(),
        });
    }
    let mut s = Simplifier::new(mesh);
    let mut edges: Vec<(usize, usize)> = s
        .faces
        .iter()
        .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    for (a, b) in edges {
        s.push_candidate(a, b);
    }
    while s.alive_faces > target_faces {
        let Some(c) = s.heap.pop() else {
            return Err(ResampleError::Unreachable {
                target: target_faces,
                best: s.alive_faces,
            });
        };
        if !s.is_current(&c) || !s.collapse_allowed(c.u, c.v, &c.target) {
            continue;
        }
        s.collapse(c.u, c.v, c.target);
    }
    let out = s.into_mesh(mesh);
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_synthetic, normalize_mesh, ShapeClass, ShapeParams};

    #[test]
    fn icosphere_1280_to_320() {
        let params = ShapeParams {
            resolution: Some(3),
            ..Default::default()
        };
        let m = normalize_mesh(&gen_synthetic(ShapeClass::Sphere, &params, 2).unwrap()).unwrap();
        assert_eq!(m.face_count(), 1280);
        let s = simplify(&m, 320).unwrap();
        let n = s.face_count() as f64;
        assert!((n - 320.0).abs() <= 0.02 * 320.0, "{n}");
        assert!((s.max_radius() - 1.0).abs() < 0.05, "{}", s.max_radius());
        assert_eq!(s.source_id, m.source_id);
        s.validate().unwrap();
        // Still closed: every edge shared by exactly two faces.
        let adj = s.adjacency();
        let edges: usize = adj.neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        assert_eq!(edges * 2, s.face_count() * 3);
    }

    #[test]
    fn target_must_be_below_current() {
        let m = gen_synthetic(ShapeClass::Box, &ShapeParams::default(), 0).unwrap();
        let err = simplify(&m, m.face_count()).unwrap_err();
        assert!(matches!(err, ResampleError::TargetNotBelow { .. }));
    }

    #[test]
    fn tetrahedron_cannot_drop_to_two_faces() {
        let m = Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
            "tet",
        )
        .unwrap();
        assert_eq!(
            simplify(&m, 2),
            Err(ResampleError::Unreachable { target: 2, best: 4 })
        );
    }

    #[test]
    fn box_corners_survive_simplification() {
        let params = ShapeParams {
            resolution: Some(10),
            aspect: Some([1.0, 1.0, 1.0]),
            rotation: crate::mesh::Rotation::None,
            ..Default::default()
        };
        let m = gen_synthetic(ShapeClass::Box, &params, 0).unwrap();
        let s = simplify(&m, 100).unwrap();
        for corner in [[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0], [1.0, -1.0, 1.0]] {
            let closest = s
                .vertices
                .iter()
                .map(|v| norm(&sub(v, &corner)))
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-9, "corner {corner:?} lost ({closest})");
        }
    }
}

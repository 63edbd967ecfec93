//! Seeded synthetic primitives used as a desk-scale stand-in for real
//! shape collections.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, sub, Face, Mesh, MeshError, Point};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Sphere,
    Box,
    Cylinder,
    Torus,
    Cone,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 5] = [
        ShapeClass::Sphere,
        ShapeClass::Box,
        ShapeClass::Cylinder,
        ShapeClass::Torus,
        ShapeClass::Cone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Box => "box",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Torus => "torus",
            ShapeClass::Cone => "cone",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapeClass::ALL
            .into_iter()
            .find(|c| c.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown shape class '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    None,
    /// Random rotation about the z axis only.
    Yaw,
    /// Uniformly random rotation.
    #[default]
    Full,
}

/// Shape parameters. Anything left as `None` is drawn from the seed.
///
/// * `resolution`: icosphere subdivisions for spheres (0..=6), otherwise the
///   number of segments around the main axis (3..=256).
/// * `aspect`: per-axis scale factors, all positive.
/// * `tube_ratio`: torus tube radius over ring radius, in (0, 1).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub resolution: Option<u32>,
    pub aspect: Option<[f64; 3]>,
    pub tube_ratio: Option<f64>,
    pub rotation: Rotation,
}

impl ShapeParams {
    pub fn validate(&self, class: ShapeClass) -> Result<(), MeshError> {
        if let Some(r) = self.resolution {
            let ok = match class {
                ShapeClass::Sphere => r <= 6,
                _ => (3..=256).contains(&r),
            };
            if !ok {
                return Err(MeshError::InvalidParameter(format!(
                    "resolution {r} out of range for {class}"
                )));
            }
        }
        if let Some(a) = self.aspect {
            if a.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(MeshError::InvalidParameter(format!(
                    "aspect factors must be positive, got {a:?}"
                )));
            }
        }
        if let Some(t) = self.tube_ratio {
            if !(t > 0.0 && t < 1.0) {
                return Err(MeshError::InvalidParameter(format!(
                    "tube_ratio must lie in (0, 1), got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Generate a watertight, outward-oriented primitive. The result is a pure
/// function of `(class, params, seed)`.
pub fn gen_synthetic(class: ShapeClass, params: &ShapeParams, seed: u64) -> Result<Mesh, MeshError> {
    params.validate(class)?;
    let mut rng = rng::stream(seed, &[rng::domain::SYNTH, class as u64]);
    let (mut vertices, faces) = match class {
        ShapeClass::Sphere => {
            let s = params
                .resolution
                .unwrap_or_else(|| rng.random_range(2..=4));
            icosphere(s)
        }
        ShapeClass::Box => {
            let n = params
                .resolution
                .unwrap_or_else(|| rng.random_range(5..=16)) as usize;
            cuboid(n)
        }
        ShapeClass::Cylinder => {
            let s = params
                .resolution
                .unwrap_or_else(|| rng.random_range(12..=40)) as usize;
            let h = (s / 2).max(2) + rng.random_range(0..=4);
            let height = rng.random_range(1.2..2.5);
            cylinder(s, h, height)
        }
        ShapeClass::Torus => {
            let u = params
                .resolution
                .unwrap_or_else(|| rng.random_range(16..=48)) as usize;
            let v = (u / 2).max(3);
            let tube = params
                .tube_ratio
                .unwrap_or_else(|| rng.random_range(0.25..0.5));
            torus(u, v, tube)
        }
        ShapeClass::Cone => {
            let s = params
                .resolution
                .unwrap_or_else(|| rng.random_range(12..=40)) as usize;
            let h = (s / 2).max(2) + rng.random_range(0..=4);
            let height = rng.random_range(1.2..2.5);
            cone(s, h, height)
        }
    };
    let aspect = params.aspect.unwrap_or_else(|| {
        let spread = match class {
            ShapeClass::Sphere => 0.15,
            _ => 0.25,
        };
        [0; 3].map(|_| 1.0 + rng.random_range(-spread..spread))
    });
    for v in &mut vertices {
        for k in 0..3 {
            v[k] *= aspect[k];
        }
    }
    let rot = match params.rotation {
        Rotation::None => None,
        Rotation::Yaw => {
            let a = rng.random_range(0.0..2.0 * PI);
            Some([
                [a.cos(), -a.sin(), 0.0],
                [a.sin(), a.cos(), 0.0],
                [0.0, 0.0, 1.0],
            ])
        }
        Rotation::Full => Some(random_rotation(&mut rng)),
    };
    if let Some(r) = rot {
        for v in &mut vertices {
            *v = [dot(&r[0], v), dot(&r[1], v), dot(&r[2], v)];
        }
    }
    let mesh = Mesh::new(vertices, faces, format!("{class}_{seed}"))?;
    Ok(mesh.with_label(class.name()))
}

/// Uniform random rotation matrix from a unit quaternion.
fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (w, x, y, z) = (
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Flip any triangle whose normal points against `outward` at its centroid.
fn orient(vertices: &[Point], faces: &mut [Face], outward: impl Fn(&Point) -> Point) {
    for f in faces.iter_mut() {
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let n = cross(&sub(&b, &a), &sub(&c, &a));
        let centroid = [0, 1, 2].map(|k| (a[k] + b[k] + c[k]) / 3.0);
        if dot(&n, &outward(&centroid)) < 0.0 {
            f.swap(1, 2);
        }
    }
}

fn icosphere(subdivisions: u32) -> (Vec<Point>, Vec<Face>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(|p| unit(&p))
    .collect();
    let mut faces: Vec<Face> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = [0, 1, 2].map(|k| (vertices[a][k] + vertices[b][k]) / 2.0);
                vertices.push(unit(&m));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    orient(&vertices, &mut faces, |c| *c);
    (vertices, faces)
}

fn unit(p: &Point) -> Point {
    let n = norm(p);
    p.map(|x| x / n)
}

/// Axis-aligned cube `[-1, 1]^3` with an `n x n` grid on every side.
fn cuboid(n: usize) -> (Vec<Point>, Vec<Face>) {
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut id = |g: [usize; 3], vertices: &mut Vec<Point>| {
        *index.entry(g).or_insert_with(|| {
            vertices.push(g.map(|x| 2.0 * x as f64 / n as f64 - 1.0));
            vertices.len() - 1
        })
    };
    for axis in 0..3 {
        let (u_axis, v_axis) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            for i in 0..n {
                for j in 0..n {
                    let corner = |di: usize, dj: usize| {
                        let mut g = [0; 3];
                        g[axis] = side;
                        g[u_axis] = i + di;
                        g[v_axis] = j + dj;
                        g
                    };
                    let a = id(corner(0, 0), &mut vertices);
                    let b = id(corner(1, 0), &mut vertices);
                    let c = id(corner(1, 1), &mut vertices);
                    let d = id(corner(0, 1), &mut vertices);
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
        }
    }
    orient(&vertices, &mut faces, |c| *c);
    (vertices, faces)
}

/// Closed cylinder of radius 1 along z with `rings` side bands.
fn cylinder(segments: usize, rings: usize, height: f64) -> (Vec<Point>, Vec<Face>) {
    let mut vertices = Vec::new();
    for j in 0..=rings {
        let z = -height / 2.0 + height * j as f64 / rings as f64;
        for i in 0..segments {
            let a = 2.0 * PI * i as f64 / segments as f64;
            vertices.push([a.cos(), a.sin(), z]);
        }
    }
    let ring = |j: usize, i: usize| j * segments + i % segments;
    let mut faces = Vec::new();
    for j in 0..rings {
        for i in 0..segments {
            let (a, b, c, d) = (ring(j, i), ring(j, i + 1), ring(j + 1, i + 1), ring(j + 1, i));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let bottom = vertices.len();
    vertices.push([0.0, 0.0, -height / 2.0]);
    let top = vertices.len();
    vertices.push([0.0, 0.0, height / 2.0]);
    for i in 0..segments {
        faces.push([bottom, ring(0, i), ring(0, i + 1)]);
        faces.push([top, ring(rings, i), ring(rings, i + 1)]);
    }
    orient(&vertices, &mut faces, |c| *c);
    (vertices, faces)
}

/// Cone with unit base radius, apex at `height` above the base centre.
fn cone(segments: usize, rings: usize, height: f64) -> (Vec<Point>, Vec<Face>) {
    let base_z = -height / 3.0;
    let mut vertices = Vec::new();
    for j in 0..rings {
        let t = j as f64 / rings as f64;
        let r = 1.0 - t;
        for i in 0..segments {
            let a = 2.0 * PI * i as f64 / segments as f64;
            vertices.push([r * a.cos(), r * a.sin(), base_z + t * height]);
        }
    }
    let ring = |j: usize, i: usize| j * segments + i % segments;
    let mut faces = Vec::new();
    for j in 0..rings - 1 {
        for i in 0..segments {
            let (a, b, c, d) = (ring(j, i), ring(j, i + 1), ring(j + 1, i + 1), ring(j + 1, i));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let apex = vertices.len();
    vertices.push([0.0, 0.0, base_z + height]);
    let base = vertices.len();
    vertices.push([0.0, 0.0, base_z]);
    for i in 0..segments {
        faces.push([apex, ring(rings - 1, i), ring(rings - 1, i + 1)]);
        faces.push([base, ring(0, i), ring(0, i + 1)]);
    }
    // The centroid of a cone sits inside it, so the radial test works.
    orient(&vertices, &mut faces, |c| [c[0], c[1], c[2]]);
    (vertices, faces)
}

/// Torus around z with ring radius 1 and tube radius `tube`.
fn torus(u_segments: usize, v_segments: usize, tube: f64) -> (Vec<Point>, Vec<Face>) {
    let mut vertices = Vec::with_capacity(u_segments * v_segments);
    for i in 0..u_segments {
        let u = 2.0 * PI * i as f64 / u_segments as f64;
        for j in 0..v_segments {
            let v = 2.0 * PI * j as f64 / v_segments as f64;
            let r = 1.0 + tube * v.cos();
            vertices.push([r * u.cos(), r * u.sin(), tube * v.sin()]);
        }
    }
    let at = |i: usize, j: usize| (i % u_segments) * v_segments + j % v_segments;
    let mut faces = Vec::new();
    for i in 0..u_segments {
        for j in 0..v_segments {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    orient(&vertices, &mut faces, |c| {
        let rho = (c[0] * c[0] + c[1] * c[1]).sqrt().max(1e-12);
        [c[0] - c[0] / rho, c[1] - c[1] / rho, c[2]]
    });
    (vertices, faces)
}

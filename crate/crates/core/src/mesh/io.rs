//! ASCII OFF and OBJ readers and writers.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::{Face, Mesh, MeshError, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Off => "off",
            MeshFormat::Obj => "obj",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(MeshFormat::Off),
            "obj" => Ok(MeshFormat::Obj),
            other => Err(format!("unknown mesh format '{other}'")),
        }
    }
}

/// Parse failures. Line numbers are 1-based.
#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: malformed header: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: '{token}' is not a number")]
    InvalidNumber { line: usize, token: String },
    #[error("line {line}: missing vertex {found} of {declared} declared")]
    MissingVertex {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("line {line}: missing face {found} of {declared} declared")]
    MissingFace {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("line {line}: malformed face: {message}")]
    MalformedFace { line: usize, message: String },
    #[error("line {line}: vertex index {index} out of range ({count} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("file contains no faces")]
    EmptyFaces,
    #[error("invalid mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Header { line, .. }
            | ParseError::InvalidNumber { line, .. }
            | ParseError::MissingVertex { line, .. }
            | ParseError::MissingFace { line, .. }
            | ParseError::MalformedFace { line, .. }
            | ParseError::IndexOutOfRange { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Parse a mesh. Polygons are fan-triangulated from their first vertex;
/// triangles that collapse to repeated indices are dropped.
pub fn parse_mesh(text: &str, format: MeshFormat, source_id: &str) -> Result<Mesh, ParseError> {
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(text)?,
        MeshFormat::Obj => parse_obj(text)?,
    };
    let faces = drop_degenerate(faces);
    if faces.is_empty() {
        return Err(ParseError::EmptyFaces);
    }
    Ok(Mesh::new(vertices, faces, source_id)?)
}

fn drop_degenerate(faces: Vec<Face>) -> Vec<Face> {
    let before = faces.len();
    let kept: Vec<Face> = faces
        .into_iter()
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    if kept.len() != before {
        log::warn!("dropped {} degenerate faces", before - kept.len());
    }
    kept
}

/// Non-empty lines with comments stripped, paired with their line numbers.
fn significant_lines(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            (!tokens.is_empty()).then_some((i + 1, tokens))
        })
        .collect()
}

fn number<T: FromStr>(token: &str, line: usize) -> Result<T, ParseError> {
    token.parse().map_err(|_| ParseError::InvalidNumber {
        line,
        token: token.to_string(),
    })
}

fn looks_like_face(tokens: &[&str]) -> bool {
    match tokens.first().and_then(|t| t.parse::<usize>().ok()) {
        Some(n) => n >= 3 && tokens.len() > n && tokens.iter().all(|t| t.parse::<i64>().is_ok()),
        None => false,
    }
}

fn fan(polygon: &[usize]) -> impl Iterator<Item = Face> + '_ {
    (1..polygon.len() - 1).map(move |k| [polygon[0], polygon[k], polygon[k + 1]])
}

fn parse_off(text: &str) -> Result<(Vec<Point>, Vec<Face>), ParseError> {
    let lines = significant_lines(text);
    let mut it = lines.iter().peekable();
    let Some((line, tokens)) = it.next() else {
        return Err(ParseError::Header {
            line: 1,
            message: "empty file".into(),
        });
    };
    if tokens[0] != "OFF" {
        return Err(ParseError::Header {
            line: *line,
            message: format!("expected 'OFF', found '{}'", tokens[0]),
        });
    }
    let (count_line, counts): (usize, Vec<&str>) = if tokens.len() > 1 {
        (*line, tokens[1..].to_vec())
    } else {
        match it.next() {
            Some((l, t)) => (*l, t.clone()),
            None => {
                return Err(ParseError::Header {
                    line: line + 1,
                    message: "missing vertex/face counts".into(),
                })
            }
        }
    };
    if counts.len() < 2 {
        return Err(ParseError::Header {
            line: count_line,
            message: "expected '<vertices> <faces> [edges]'".into(),
        });
    }
    let nv: usize = number(counts[0], count_line)?;
    let nf: usize = number(counts[1], count_line)?;
    if nf == 0 {
        return Err(ParseError::EmptyFaces);
    }
    let rest: Vec<&(usize, Vec<&str>)> = it.collect();
    let short = rest.len() < nv + nf;
    let eof_line = text.lines().count() + 1;

    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let Some((line, tokens)) = rest.get(i) else {
            return Err(ParseError::MissingVertex {
                line: eof_line,
                declared: nv,
                found: i,
            });
        };
        // A face line showing up inside a short vertex block means the
        // vertex list ended early.
        if short && looks_like_face(tokens) || tokens.len() < 3 {
            return Err(ParseError::MissingVertex {
                line: *line,
                declared: nv,
                found: i,
            });
        }
        vertices.push([
            number(tokens[0], *line)?,
            number(tokens[1], *line)?,
            number(tokens[2], *line)?,
        ]);
    }

    let mut faces = Vec::with_capacity(nf);
    for i in 0..nf {
        let Some((line, tokens)) = rest.get(nv + i) else {
            return Err(ParseError::MissingFace {
                line: eof_line,
                declared: nf,
                found: i,
            });
        };
        let n: usize = number(tokens[0], *line)?;
        if n < 3 {
            return Err(ParseError::MalformedFace {
                line: *line,
                message: format!("polygon with {n} vertices"),
            });
        }
        if tokens.len() < n + 1 {
            return Err(ParseError::MalformedFace {
                line: *line,
                message: format!("declares {n} vertices but lists {}", tokens.len() - 1),
            });
        }
        let mut polygon = Vec::with_capacity(n);
        for t in &tokens[1..=n] {
            let index: i64 = number(t, *line)?;
            if index < 0 || index as usize >= nv {
                return Err(ParseError::IndexOutOfRange {
                    line: *line,
                    index,
                    count: nv,
                });
            }
            polygon.push(index as usize);
        }
        faces.extend(fan(&polygon));
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str) -> Result<(Vec<Point>, Vec<Face>), ParseError> {
    let mut vertices: Vec<Point> = Vec::new();
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    for (line, tokens) in significant_lines(text) {
        match tokens[0] {
            "v" => {
                if tokens.len() < 4 {
                    return Err(ParseError::MissingVertex {
                        line,
                        declared: vertices.len() + 1,
                        found: vertices.len(),
                    });
                }
                vertices.push([
                    number(tokens[1], line)?,
                    number(tokens[2], line)?,
                    number(tokens[3], line)?,
                ]);
            }
            "f" => {
                if tokens.len() < 4 {
                    return Err(ParseError::MalformedFace {
                        line,
                        message: format!("polygon with {} vertices", tokens.len() - 1),
                    });
                }
                let mut polygon = Vec::with_capacity(tokens.len() - 1);
                for t in &tokens[1..] {
                    let head = t.split('/').next().unwrap_or("");
                    let raw: i64 = number(head, line)?;
                    // Negative indices count back from the latest vertex.
                    let index = if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        raw - 1
                    };
                    if raw == 0 {
                        return Err(ParseError::IndexOutOfRange {
                            line,
                            index: raw,
                            count: vertices.len(),
                        });
                    }
                    polygon.push(index);
                }
                polygons.push((line, polygon));
            }
            // normals, texture coordinates, groups, materials
            _ => {}
        }
    }
    if polygons.is_empty() {
        return Err(ParseError::EmptyFaces);
    }
    let count = vertices.len();
    let mut faces = Vec::new();
    for (line, polygon) in polygons {
        let mut resolved = Vec::with_capacity(polygon.len());
        for index in polygon {
            if index < 0 || index as usize >= count {
                return Err(ParseError::IndexOutOfRange {
                    line,
                    index: if index < 0 { index } else { index + 1 },
                    count,
                });
            }
            resolved.push(index as usize);
        }
        faces.extend(fan(&resolved));
    }
    Ok((vertices, faces))
}

/// Serialise a mesh. Coordinates use the shortest representation that
/// parses back to the same `f64`, so a round trip is exact.
pub fn write_mesh(mesh: &Mesh, format: MeshFormat) -> Result<String, MeshError> {
    mesh.validate()?;
    let mut out = String::new();
    match format {
        MeshFormat::Off => {
            out.push_str("OFF\n");
            let _ = writeln!(out, "{} {} 0", mesh.vertices.len(), mesh.faces.len());
            for v in &mesh.vertices {
                let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
            }
            for f in &mesh.faces {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        MeshFormat::Obj => {
            let _ = writeln!(out, "# {}", mesh.source_id);
            for v in &mesh.vertices {
                let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
            }
            for f in &mesh.faces {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    Ok(out)
}

/// Read a mesh file, picking the format from its extension. The file stem
/// becomes the source id unless one is given.
pub fn read_mesh_file(path: &Path, source_id: Option<&str>) -> Result<Mesh, ParseError> {
    let io_err = |message: String| ParseError::Io {
        path: path.display().to_string(),
        message,
    };
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| io_err("unrecognised mesh extension".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| io_err(e.to_string()))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    parse_mesh(&text, format, source_id.unwrap_or(&stem))
}

pub fn write_mesh_file(mesh: &Mesh, path: &Path) -> std::io::Result<()> {
    let format = MeshFormat::from_path(path).unwrap_or(MeshFormat::Off);
    let text = write_mesh(mesh, format)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    std::fs::write(path, text)
}

//! JSON-lines dataset manifests and the synthetic dataset builder.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{gen_synthetic, Mesh, MeshError, ShapeClass, ShapeParams};
use crate::pipeline::source_key;
use crate::rng::{self, domain};

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("manifest line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Mesh file, relative to the manifest's directory unless absolute.
    pub path: String,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ManifestRecord {
    pub fn resolve(&self, manifest_dir: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ManifestError::Line {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn manifest_text(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

/// Assign `test` to `round(test_fraction · n)` models of every class and
/// `train` to the rest. The choice is a seeded shuffle of each class's
/// source ids, so it depends only on the ids, the class and the seed.
/// Returns the classes whose test share came out empty.
pub fn split_per_class(records: &mut [ManifestRecord], test_fraction: f64, seed: u64) -> Vec<String> {
    let mut classes: Vec<String> = records.iter().filter_map(|r| r.class.clone()).collect();
    classes.sort();
    classes.dedup();
    let mut empty = Vec::new();
    for class in classes {
        let mut ids: Vec<String> = records
            .iter()
            .filter(|r| r.class.as_deref() == Some(class.as_str()))
            .map(|r| r.source_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut rng::stream(seed, &[domain::SPLIT, source_key(&class)]));
        let n_test = (ids.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 {
            warn!("class {class}: {} model(s), test split is empty", ids.len());
            empty.push(class.clone());
        }
        let test: Vec<&String> = ids.iter().take(n_test).collect();
        for r in records.iter_mut().filter(|r| r.class.as_deref() == Some(class.as_str())) {
            r.split = Some(if test.contains(&&r.source_id) { Split::Test } else { Split::Train });
        }
    }
    empty
}

/// `per_class` synthetic meshes of each class, with manifest records
/// pointing at `<source_id>.off` and an 80/20 per-class split.
pub fn synthesize(
    classes: &[ShapeClass],
    per_class: usize,
    params: &ShapeParams,
    seed: u64,
) -> Result<(Vec<Mesh>, Vec<ManifestRecord>), MeshError> {
    let mut meshes = Vec::new();
    let mut records = Vec::new();
    for (c, &class) in classes.iter().enumerate() {
        for i in 0..per_class {
            let mesh_seed = rng::derive_seed(seed, &[domain::SYNTH, c as u64, i as u64]);
            let mesh = gen_synthetic(class, params, mesh_seed)?;
            records.push(ManifestRecord {
                path: format!("{}.off", mesh.source_id),
                source_id: mesh.source_id.clone(),
                class: Some(class.name().to_string()),
                seed: Some(mesh_seed),
                face_count: Some(mesh.face_count()),
                split: None,
            });
            meshes.push(mesh);
        }
    }
    split_per_class(&mut records, 0.2, seed);
    Ok((meshes, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_twenty_splits_eighty_twenty() {
        let (meshes, records) = synthesize(&ShapeClass::ALL, 20, &ShapeParams::default(), 1).unwrap();
        assert_eq!(meshes.len(), 100);
        let test: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == Some(Split::Test)).collect();
        assert_eq!(test.len(), 20);
        for class in ShapeClass::ALL {
            assert_eq!(test.iter().filter(|r| r.class.as_deref() == Some(class.name())).count(), 4);
        }
        assert!(meshes.iter().zip(&records).all(|(m, r)| m.source_id == r.source_id
            && m.label.as_deref() == r.class.as_deref()));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize(&ShapeClass::ALL, 3, &ShapeParams::default(), 9).unwrap();
        let b = synthesize(&ShapeClass::ALL, 3, &ShapeParams::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1, synthesize(&ShapeClass::ALL, 3, &ShapeParams::default(), 10).unwrap().1);
    }

    #[test]
    fn single_model_classes_have_no_test_split() {
        let (_, mut records) = synthesize(&[ShapeClass::Box, ShapeClass::Cone], 1, &ShapeParams::default(), 2).unwrap();
        let empty = split_per_class(&mut records, 0.2, 2);
        assert_eq!(empty, ["box", "cone"]);
        assert!(records.iter().all(|r| r.split == Some(Split::Train)));
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let (_, records) = synthesize(&[ShapeClass::Torus], 2, &ShapeParams::default(), 4).unwrap();
        let text = manifest_text(&records);
        assert_eq!(parse_manifest(&text).unwrap(), records);
        let minimal = parse_manifest("{\"path\":\"a.obj\",\"source_id\":\"a\"}\n\n").unwrap();
        assert_eq!(minimal[0].class, None);
        assert!(matches!(
            parse_manifest("{\"path\":\"a.obj\",\"source_id\":\"a\"}\n{oops\n"),
            Err(ManifestError::Line { line: 2, .. })
        ));
    }
}

//! Reading and writing the artifacts the commands exchange.

use std::fs;
use std::path::{Path, PathBuf};

use meshwalk::manifest::{read_manifest, ManifestRecord, Split};
use meshwalk::mesh::read_mesh_file;
use meshwalk::pipeline::FeatureVector;
use meshwalk::Mesh;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Write `text`, creating parent directories. Goes through a temporary file
/// so a crash never leaves a half-written artifact behind.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Print to stdout, or write to `out` when given.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// A manifest together with its meshes, in manifest order. Meshes carry
/// their class as label.
pub struct LoadedManifest {
    pub records: Vec<ManifestRecord>,
    pub meshes: Vec<Mesh>,
}

pub fn load_manifest(path: &Path, keep: impl Fn(&ManifestRecord) -> bool) -> CliResult<LoadedManifest> {
    let dir = manifest_dir(path);
    let records: Vec<ManifestRecord> = read_manifest(path)?.into_iter().filter(|r| keep(r)).collect();
    let meshes = records
        .iter()
        .map(|r| {
            let mesh = read_mesh_file(&r.resolve(&dir), Some(&r.source_id))?;
            Ok(match &r.class {
                Some(c) => mesh.with_label(c.clone()),
                None => mesh,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(LoadedManifest { records, meshes })
}

/// One line of an embeddings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub source_id: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn feature(&self) -> FeatureVector {
        FeatureVector {
            source_id: self.source_id.clone(),
            label: self.label.clone(),
            values: self.vector.clone(),
        }
    }
}

pub fn embeddings_text(records: &[EmbeddingRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("embedding serializes") + "\n")
        .collect()
}

pub fn read_embeddings(path: &Path) -> CliResult<Vec<EmbeddingRecord>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no embeddings", path.display())));
    }
    Ok(out)
}

/// File-name-safe form of a source id.
pub fn file_stem(source_id: &str) -> String {
    source_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_lines_round_trip() {
        let recs = vec![EmbeddingRecord {
            source_id: "a".into(),
            label: Some("box".into()),
            split: Some(Split::Test),
            vector: vec![0.1, -2.5e-7],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        write_text(&path, &embeddings_text(&recs)).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), recs);
    }

    #[test]
    fn stems_are_path_safe() {
        assert_eq!(file_stem("chairs/chair 01"), "chairs_chair_01");
    }
}

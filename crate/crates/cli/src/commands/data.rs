//! Dataset construction: `synth`, `ingest` and `prep`.

use std::path::{Path, PathBuf};

use log::{info, warn};
use meshwalk::manifest::{manifest_text, split_per_class, synthesize, ManifestRecord};
use meshwalk::mesh::{read_mesh_file, write_mesh_file, MeshFormat, Rotation, ShapeClass, ShapeParams};
use meshwalk::resample::{resample_to, ResampleTargets};
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::error::{CliError, CliResult};
use crate::files::{create_dir, file_stem, manifest_dir, write_text};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
const TEST_FRACTION: f64 = 0.2;

pub fn synth(classes: &[ShapeClass], per_class: usize, seed: u64, rotation: Rotation, out: &Path) -> CliResult<()> {
    if classes.is_empty() || per_class == 0 {
        return Err(CliError::Config("need at least one class and one mesh per class".into()));
    }
    let params = ShapeParams { rotation, ..Default::default() };
    let (meshes, records) = synthesize(classes, per_class, &params, seed).map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(out)?;
    for (mesh, rec) in meshes.iter().zip(&records) {
        let path = out.join(&rec.path);
        write_mesh_file(mesh, &path).map_err(|e| CliError::io(&path, e))?;
    }
    let manifest = out.join(MANIFEST_NAME);
    write_text(&manifest, &manifest_text(&records))?;
    let empty = empty_test_classes(&records);
    for class in &empty {
        warn!("class {class}: test split is empty");
    }
    println!(
        "wrote {} meshes and {} ({} warnings)",
        meshes.len(),
        manifest.display(),
        empty.len()
    );
    Ok(())
}

fn empty_test_classes(records: &[ManifestRecord]) -> Vec<String> {
    let mut classes: Vec<&str> = records.iter().filter_map(|r| r.class.as_deref()).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .filter(|c| {
            !records
                .iter()
                .any(|r| r.class.as_deref() == Some(c) && r.split == Some(meshwalk::manifest::Split::Test))
        })
        .map(str::to_string)
        .collect()
}

/// Build a manifest over `root/<class>/<file>.{off,obj}`. Source ids are
/// `<class>/<file stem>`; paths are stored relative to `out`'s directory
/// when possible.
pub fn ingest(root: &Path, seed: u64, out: &Path) -> CliResult<()> {
    if !root.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", root.display())));
    }
    let base = manifest_dir(out);
    let base = base.canonicalize().unwrap_or(base);
    let mut records = Vec::new();
    for entry in WalkDir::new(root).min_depth(2).max_depth(2).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || MeshFormat::from_path(path).is_none() {
            continue;
        }
        let class = path
            .parent()
            .and_then(Path::file_name)
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Data(format!("{}: unreadable class folder", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
        let abs = path.canonicalize().map_err(|e| CliError::io(path, e))?;
        let stored = abs.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(abs.clone());
        records.push(ManifestRecord {
            path: stored.to_string_lossy().into_owned(),
            source_id: format!("{class}/{stem}"),
            class: Some(class.to_string()),
            seed: None,
            face_count: None,
            split: None,
        });
    }
    if records.is_empty() {
        return Err(CliError::Data(format!("no .off or .obj files under {}/<class>/", root.display())));
    }
    let empty = split_per_class(&mut records, TEST_FRACTION, seed);
    write_text(out, &manifest_text(&records))?;
    println!("indexed {} meshes into {} ({} warnings)", records.len(), out.display(), empty.len());
    Ok(())
}

/// Resample every manifest mesh to every target. Meshes that fail are
/// reported and left out; the command still succeeds.
pub fn prep(manifest: &Path, targets: &ResampleTargets, out: &Path) -> CliResult<()> {
    targets.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let records = meshwalk::manifest::read_manifest(manifest)?;
    let dir = manifest_dir(manifest);
    create_dir(out)?;

    let results: Vec<Result<Vec<ManifestRecord>, String>> = records
        .par_iter()
        .map(|rec| prep_one(rec, &dir, targets, out))
        .collect();
    let mut rows = Vec::new();
    let mut warnings = 0;
    for (rec, result) in records.iter().zip(results) {
        match result {
            Ok(r) => rows.extend(r),
            Err(message) => {
                warnings += 1;
                warn!("skipping {}: {message}", rec.source_id);
            }
        }
    }
    let path = out.join(MANIFEST_NAME);
    write_text(&path, &manifest_text(&rows))?;
    info!("resampled {} of {} meshes", records.len() - warnings, records.len());
    println!("wrote {} meshes and {} ({warnings} warnings)", rows.len(), path.display());
    Ok(())
}

fn prep_one(rec: &ManifestRecord, dir: &Path, targets: &ResampleTargets, out: &Path) -> Result<Vec<ManifestRecord>, String> {
    let mesh = read_mesh_file(&rec.resolve(dir), Some(&rec.source_id)).map_err(|e| e.to_string())?;
    let variants = resample_to(&mesh, targets).map_err(|e| e.to_string())?;
    let stem = file_stem(&rec.source_id);
    let mut rows = Vec::with_capacity(variants.len());
    for (variant, &target) in variants.iter().zip(&targets.face_counts) {
        let name = format!("{stem}_{target}.off");
        let path: PathBuf = out.join(&name);
        write_mesh_file(variant, &path).map_err(|e| format!("{}: {e}", path.display()))?;
        rows.push(ManifestRecord {
            path: name,
            face_count: Some(variant.face_count()),
            ..rec.clone()
        });
    }
    Ok(rows)
}

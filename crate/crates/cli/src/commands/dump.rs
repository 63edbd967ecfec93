//! Inspection: `walks dump` and `clusters dump`.

use std::path::Path;

use meshwalk::mesh::read_mesh_file;
use meshwalk::pipeline::Checkpoint;
use meshwalk::rng::derive_seed;
use meshwalk::walker::{seeded_walk, Surface, WalkConfig, WalkRecord};
use meshwalk::Mesh;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files::{emit, load_manifest, to_json};

/// `count` walks per mesh. Each record's seed reproduces its walk through
/// [`seeded_walk`].
pub fn walks(meshes: &[Mesh], config: &WalkConfig, count: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut text = String::new();
    for (m, mesh) in meshes.iter().enumerate() {
        let surface = Surface::from_mesh(mesh);
        for w in 0..count {
            let walk_seed = derive_seed(seed, &[m as u64, w as u64]);
            let walk = seeded_walk(&surface, config, walk_seed).map_err(|e| CliError::Data(e.to_string()))?;
            let record = WalkRecord {
                source_id: mesh.source_id.clone(),
                seed: walk_seed,
                vertices: walk.vertex_indices,
                jumps: walk.jump_flags,
            };
            text.push_str(&serde_json::to_string(&record).expect("walk serializes"));
            text.push('\n');
        }
    }
    emit(out, &text)
}

pub fn walk_inputs(mesh: Option<&Path>, manifest: Option<&Path>) -> CliResult<Vec<Mesh>> {
    match (mesh, manifest) {
        (Some(path), None) => Ok(vec![read_mesh_file(path, None)?]),
        (None, Some(path)) => Ok(load_manifest(path, |_| true)?.meshes),
        _ => Err(CliError::Config("give exactly one of --mesh or --manifest".into())),
    }
}

#[derive(Serialize)]
struct ClusterDump<'a> {
    epoch: u64,
    clusters: usize,
    dim: usize,
    epoch_of_last_update: Option<u64>,
    /// Assignments accumulated since the last means update.
    counts: &'a [u64],
    means: &'a [Vec<f64>],
}

pub fn clusters(checkpoint: &Path, out: Option<&Path>) -> CliResult<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let Some(state) = &ck.clusters else {
        return Err(CliError::Data(format!(
            "{}: no cluster state yet (epoch {}, clustering starts at epoch {})",
            checkpoint.display(),
            ck.epoch,
            ck.config.loss.cluster_start_epoch
        )));
    };
    let dump = ClusterDump {
        epoch: ck.epoch,
        clusters: state.k(),
        dim: state.dim(),
        epoch_of_last_update: state.epoch_of_last_update,
        counts: &state.accum_count,
        means: &state.means,
    };
    emit(out, &to_json(&dump))
}

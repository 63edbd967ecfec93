use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::step::{forward, loss_and_grad};
use super::PipelineError;
use crate::losses::{kmeans_init, ClusterState};
use crate::mesh::{normalize_mesh, Mesh};
use crate::nn::{Model, OptimizerState};
use crate::rng::{self, domain};
use crate::walker::{batch_for_models, ModelSurfaces, Surface};
use crate::Real;

/// Training data: walkable surfaces grouped by source model. Labels are
/// dropped on construction, so nothing downstream of here can read them.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    models: Vec<ModelSurfaces>,
}

impl TrainingSet {
    /// Group meshes by `source_id` (ordered by id) and normalize each one.
    pub fn from_meshes<I: IntoIterator<Item = Mesh>>(meshes: I) -> Result<Self, PipelineError> {
        let mut groups: BTreeMap<String, Vec<Surface>> = BTreeMap::new();
        for mesh in meshes {
            let normalized = normalize_mesh(&mesh)?;
            groups
                .entry(mesh.source_id)
                .or_default()
                .push(Surface::from_mesh(&normalized));
        }
        Ok(TrainingSet {
            models: groups
                .into_iter()
                .map(|(source_id, surfaces)| ModelSurfaces { source_id, surfaces })
                .collect(),
        })
    }

    pub fn models(&self) -> &[ModelSurfaces] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: u64,
    pub batch: usize,
    pub nt_xent: f64,
    pub kmeans: f64,
    pub total: f64,
}

pub const TRACE_HEADER: &str = "epoch,batch,nt_xent,kmeans,total";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.batch, self.nt_xent, self.kmeans, self.total
        )
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Training state between epochs.
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub model: Model<T>,
    pub optimizer: OptimizerState<T>,
    pub clusters: Option<ClusterState>,
    /// Completed epochs.
    pub epoch: u64,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        let model = Model::init(config.shape(), config.seed);
        let optimizer = OptimizerState::new(&model, config.adam);
        Ok(Trainer {
            config,
            model,
            optimizer,
            clusters: None,
            epoch: 0,
        })
    }

    /// Continue from a checkpoint written under the same config (the
    /// epoch budget may differ).
    pub fn resume(config: TrainConfig, checkpoint: &Checkpoint) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        if checkpoint.config.hash() != config.hash() {
            return Err(PipelineError::ConfigMismatch);
        }
        Ok(Trainer {
            config,
            model: checkpoint.model.cast(),
            optimizer: checkpoint.optimizer_as(),
            clusters: checkpoint.clusters.clone(),
            epoch: checkpoint.epoch,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_training(
            &self.config,
            self.epoch,
            &self.model,
            &self.optimizer,
            self.clusters.as_ref(),
        )
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Seed the means with k-means++ over one projected, normalized walk
    /// pair per model.
    fn init_clusters(&self, set: &TrainingSet, epoch: u64) -> Result<ClusterState, PipelineError> {
        let all: Vec<usize> = (0..set.len()).collect();
        let mut sample = Vec::with_capacity(2 * set.len());
        for chunk in all.chunks(self.config.batch_size) {
            let batch = batch_for_models(
                set.models(),
                chunk,
                &self.config.walk,
                self.config.seed,
                domain::CLUSTER_INIT << 32 | epoch,
            )?;
            let unit = forward(&self.model, &batch.sequences)?.embeddings.normalized()?;
            sample.extend((0..unit.rows()).map(|i| unit.row(i).to_vec()));
        }
        let mut r = rng::stream(self.config.seed, &[domain::CLUSTER_INIT, epoch]);
        Ok(ClusterState::new(kmeans_init(&sample, self.config.loss.clusters, &mut r)?))
    }

    /// One pass in which every model appears in exactly one batch.
    pub fn run_epoch(&mut self, set: &TrainingSet) -> Result<Vec<TraceRow>, PipelineError> {
        let cfg = self.config;
        if set.len() < cfg.batch_size {
            return Err(PipelineError::DatasetTooSmall {
                models: set.len(),
                batch_size: cfg.batch_size,
            });
        }
        let epoch = self.epoch;
        if cfg.loss.clustering_active(epoch) && self.clusters.is_none() {
            info!("epoch {epoch}: seeding {} cluster means", cfg.loss.clusters);
            self.clusters = Some(self.init_clusters(set, epoch)?);
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[domain::SHUFFLE, epoch]));

        let mut rows = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = batch_for_models(set.models(), chunk, &cfg.walk, cfg.seed, epoch)?;
            let (loss, grads) = loss_and_grad(
                &self.model,
                &batch.sequences,
                self.clusters.as_mut(),
                &cfg.loss,
                epoch,
            )
            .map_err(|e| e.at_batch(epoch, b))?;
            self.optimizer.step(&mut self.model, &grads);
            let row = TraceRow {
                epoch,
                batch: b,
                nt_xent: loss.nt_xent,
                kmeans: loss.kmeans,
                total: loss.total,
            };
            debug!("{}", row.csv_line());
            rows.push(row);
        }

        if let Some(state) = self.clusters.as_mut() {
            let since = epoch + 1 - cfg.loss.cluster_start_epoch;
            if since % cfg.loss.means_update_period == 0 {
                state.update_means(epoch);
                debug!("epoch {epoch}: means updated");
            }
        }
        self.epoch += 1;
        let mean = rows.iter().map(|r| r.total).sum::<f64>() / rows.len() as f64;
        info!("epoch {epoch}: mean loss {mean:.6}");
        Ok(rows)
    }
}

/// Train to the configured epoch budget, writing `checkpoint_path` after
/// every epoch when given. Returns the trainer and the per-batch trace.
pub fn train<T: Real>(
    mut trainer: Trainer<T>,
    set: &TrainingSet,
    checkpoint_path: Option<&Path>,
) -> Result<(Trainer<T>, Vec<TraceRow>), PipelineError> {
    let mut trace = Vec::new();
    while !trainer.finished() {
        trace.extend(trainer.run_epoch(set)?);
        if let Some(path) = checkpoint_path {
            trainer.checkpoint().save(path)?;
        }
    }
    Ok((trainer, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossConfig;
    use crate::mesh::{gen_synthetic, ShapeClass, ShapeParams};
    use crate::nn::{AdamConfig, Parameters};
    use crate::pipeline::config::Preset;
    use crate::walker::WalkConfig;

    fn toy_set(n: u64) -> TrainingSet {
        let meshes = (0..n).map(|i| {
            let class = ShapeClass::ALL[i as usize % ShapeClass::ALL.len()];
            gen_synthetic(class, &ShapeParams::default(), i).unwrap()
        });
        TrainingSet::from_meshes(meshes).unwrap()
    }

    fn toy_config(epochs: u64) -> TrainConfig {
        let mut c = TrainConfig::new(Preset::Desk, epochs, 3);
        c.batch_size = 4;
        c.walk = WalkConfig {
            length: 12,
            jump_prob: 0.05,
        };
        c.loss = LossConfig {
            clusters: 3,
            cluster_start_epoch: 1,
            means_update_period: 1,
            ..Default::default()
        };
        c
    }

    #[test]
    fn one_epoch_trace_has_one_row_per_batch() {
        let set = toy_set(10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let (trainer, trace) = train(Trainer::<f32>::new(toy_config(1)).unwrap(), &set, Some(&path)).unwrap();
        assert_eq!(trace.len(), 3);
        assert!(trace.iter().all(|r| r.total.is_finite() && r.kmeans == 0.0));
        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.epoch, 1);
        assert_eq!(ck.model, trainer.model.cast::<f64>());
    }

    #[test]
    fn traces_are_reproducible() {
        let set = toy_set(8);
        let run = || train(Trainer::<f32>::new(toy_config(3)).unwrap(), &set, None).unwrap().1;
        let (a, b) = (run(), run());
        assert_eq!(
            a.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>()
        );
        assert!(a.iter().filter(|r| r.epoch >= 1).all(|r| r.kmeans > 0.0));
    }

    #[test]
    fn resumed_run_matches_an_uninterrupted_one() {
        let set = toy_set(8);
        let (_, full) = train(Trainer::<f32>::new(toy_config(3)).unwrap(), &set, None).unwrap();
        let (first, _) = train(Trainer::<f32>::new(toy_config(2)).unwrap(), &set, None).unwrap();
        let ck = Checkpoint::from_json(&first.checkpoint().to_json()).unwrap();
        let mut rest = Trainer::<f32>::resume(toy_config(3), &ck).unwrap();
        let tail = rest.run_epoch(&set).unwrap();
        assert_eq!(&full[full.len() - tail.len()..], &tail[..]);

        let mut other = toy_config(3);
        other.seed = 4;
        assert!(matches!(
            Trainer::<f32>::resume(other, &ck),
            Err(PipelineError::ConfigMismatch)
        ));
    }

    #[test]
    fn zero_alpha_matches_a_pure_contrastive_run() {
        let set = toy_set(8);
        let mut with_tracking = toy_config(3);
        with_tracking.loss.alpha = 0.0;
        let mut pure = with_tracking;
        pure.loss.cluster_start_epoch = u64::MAX;
        let (a, ta) = train(Trainer::<f64>::new(with_tracking).unwrap(), &set, None).unwrap();
        let (b, tb) = train(Trainer::<f64>::new(pure).unwrap(), &set, None).unwrap();
        assert_eq!(a.model, b.model);
        assert!(ta.iter().zip(&tb).all(|(x, y)| x.nt_xent == y.nt_xent));
    }

    #[test]
    fn small_step_on_a_frozen_batch_lowers_the_loss() {
        let set = toy_set(6);
        let mut cfg = toy_config(1);
        cfg.adam = AdamConfig {
            learning_rate: 1e-5,
            ..Default::default()
        };
        let mut model = Model::<f64>::init(cfg.shape(), 11);
        let batch = batch_for_models(set.models(), &[0, 1, 2, 3], &cfg.walk, 1, 0).unwrap();
        let seqs = &batch.sequences;
        let unit = forward(&model, seqs).unwrap().embeddings.normalized().unwrap();
        let sample: Vec<Vec<f64>> = (0..unit.rows()).map(|i| unit.row(i).to_vec()).collect();
        let means = kmeans_init(&sample, 3, &mut rng::stream(1, &[])).unwrap();
        let mut state = ClusterState::new(means);
        let (before, grads) = loss_and_grad(&model, seqs, Some(&mut state.clone()), &cfg.loss, 5).unwrap();
        let mut opt = OptimizerState::new(&model, cfg.adam);
        opt.step(&mut model, &grads);
        let (after, _) = loss_and_grad(&model, seqs, Some(&mut state), &cfg.loss, 5).unwrap();
        assert!(after.total < before.total, "{} !< {}", after.total, before.total);
        assert!(model.all_finite());
    }

    #[test]
    fn too_few_models_for_a_batch() {
        let set = toy_set(3);
        let mut t = Trainer::<f32>::new(toy_config(1)).unwrap();
        assert!(matches!(
            t.run_epoch(&set),
            Err(PipelineError::DatasetTooSmall { models: 3, batch_size: 4 })
        ));
    }

    #[test]
    fn csv_trace_format() {
        let rows = [TraceRow {
            epoch: 0,
            batch: 1,
            nt_xent: 2.5,
            kmeans: 0.0,
            total: 2.5,
        }];
        assert_eq!(trace_csv(&rows), "epoch,batch,nt_xent,kmeans,total\n0,1,2.5,0,2.5\n");
    }
}

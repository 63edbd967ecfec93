//! End-to-end run on the synthetic five-class dataset: resample, train,
//! embed, then report retrieval mAP and SVM accuracy.
//!
//! `cargo run --release --example synthetic_run -- [epochs] [alpha] [learning_rate]`
//!
//! Environment overrides: `SEED` (training seed, default 7), `TAU` (0.2),
//! `JUMP` (0.5), `ROTATION` (`none`, `yaw` or `full`; default `none`).

use std::time::Instant;

use meshwalk::eval::{classification_report, labelled, mean_average_precision, svm_train, RetrievalIndex, SvmConfig};
use meshwalk::manifest::{synthesize, Split};
use meshwalk::mesh::{Rotation, ShapeClass, ShapeParams};
use meshwalk::pipeline::{embed_dataset, train, Preset, TrainConfig, Trainer, TrainingSet};
use meshwalk::resample::{resample_to, ResampleTargets};
use meshwalk::walker::WalkConfig;

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> Result<T, T::Err> {
    std::env::var(key).map_or(Ok(default), |v| v.parse())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: u64 = args.get(1).map_or(Ok(120), |s| s.parse())?;
    let alpha: f64 = args.get(2).map_or(Ok(1.0), |s| s.parse())?;
    let lr: f64 = args.get(3).map_or(Ok(5e-4), |s| s.parse())?;
    let rotation = match std::env::var("ROTATION").as_deref() {
        Ok("yaw") => Rotation::Yaw,
        Ok("full") => Rotation::Full,
        _ => Rotation::None,
    };

    let start = Instant::now();
    let params = ShapeParams { rotation, ..Default::default() };
    let (meshes, records) = synthesize(&ShapeClass::ALL, 20, &params, 2024)?;
    let targets = ResampleTargets::default();
    let mut train_meshes = Vec::new();
    let mut all = Vec::new();
    for (mesh, rec) in meshes.iter().zip(&records) {
        for m in resample_to(mesh, &targets)? {
            if rec.split == Some(Split::Train) {
                train_meshes.push(m.clone());
            }
            all.push(m);
        }
    }
    eprintln!("resampled {} meshes in {:.1?}", all.len(), start.elapsed());

    let mut config = TrainConfig::new(Preset::Desk, epochs, env_or("SEED", 7)?);
    config.batch_size = 8;
    config.walk = WalkConfig { length: 64, jump_prob: env_or("JUMP", 0.5)? };
    config.loss.clusters = 10;
    config.loss.cluster_start_epoch = 30;
    config.loss.means_update_period = 5;
    config.loss.alpha = alpha;
    config.loss.temperature = env_or("TAU", 0.2)?;
    config.adam.learning_rate = lr;

    let set = TrainingSet::from_meshes(train_meshes)?;
    let (trainer, trace) = train(Trainer::<f32>::new(config)?, &set, None)?;
    for e in (0..epochs).step_by(10) {
        let rows: Vec<_> = trace.iter().filter(|r| r.epoch == e).collect();
        let n = rows.len() as f64;
        let nt: f64 = rows.iter().map(|r| r.nt_xent).sum::<f64>() / n;
        let km: f64 = rows.iter().map(|r| r.kmeans).sum::<f64>() / n;
        eprintln!("epoch {e:3}: nt_xent {nt:.4} kmeans {km:.4}");
    }
    eprintln!("trained in {:.1?}", start.elapsed());

    let features = embed_dataset(&trainer.model, &all, config.embed_walks, &config.walk, config.seed)?;
    let split_of = |id: &str| records.iter().find(|r| r.source_id == id).and_then(|r| r.split);
    let test_ids: Vec<&str> = features
        .iter()
        .filter(|f| split_of(&f.source_id) == Some(Split::Test))
        .map(|f| f.source_id.as_str())
        .collect();
    let map = mean_average_precision(&RetrievalIndex::new(features.clone())?, &test_ids)?;
    let (tr, te): (Vec<_>, Vec<_>) = features
        .into_iter()
        .partition(|f| split_of(&f.source_id) == Some(Split::Train));
    let svm = svm_train(&labelled(&tr), &SvmConfig::default())?;
    let report = classification_report(&svm, &labelled(&te))?;
    println!("map {:.4} svm_accuracy {:.4} per_class {:?}", map.map, report.accuracy, map.per_class_ap);
    eprintln!("total {:.1?}", start.elapsed());
    Ok(())
}

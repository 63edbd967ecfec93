//! Training and inference: `train`, `embed`, `gradcheck`.

use std::path::{Path, PathBuf};

use log::info;
use meshwalk::gradsuite::{run_suite, SuiteConfig};
use meshwalk::manifest::Split;
use meshwalk::pipeline::{
    embed_dataset, train as run_training, trace_csv, Checkpoint, KeyValues, Precision, TrainConfig, Trainer,
    TrainingSet,
};
use meshwalk::Real;

use crate::error::{CliError, CliResult};
use crate::files::{embeddings_text, load_manifest, read_text, write_text, EmbeddingRecord};

pub const CHECKPOINT_NAME: &str = "checkpoint.json";
pub const TRACE_NAME: &str = "trace.csv";

/// Training keys plus where to read data and write results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut kv = KeyValues::parse(text)?;
        let train = TrainConfig::read(&mut kv);
        let manifest: Option<PathBuf> = kv.required("manifest");
        let out_dir: Option<PathBuf> = kv.required("out_dir");
        kv.finish()?;
        match (train, manifest, out_dir) {
            (Some(train), Some(manifest), Some(out_dir)) => Ok(RunConfig { train, manifest, out_dir }),
            _ => unreachable!("finish() reports every missing or invalid key"),
        }
    }
}

/// Size rayon's global pool. `0` keeps rayon's default of one per core.
pub fn set_threads(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("thread pool already configured: {e}");
    }
}

pub fn train(config_path: &Path, resume: bool) -> CliResult<()> {
    let run = RunConfig::parse(&read_text(config_path)?)?;
    set_threads(run.train.threads);
    match run.train.precision {
        Precision::F32 => train_as::<f32>(&run, resume),
        Precision::F64 => train_as::<f64>(&run, resume),
    }
}

fn train_as<T: Real>(run: &RunConfig, resume: bool) -> CliResult<()> {
    // Only training-split meshes are read; records without a split count as training data.
    let data = load_manifest(&run.manifest, |r| r.split != Some(Split::Test))?;
    let set = TrainingSet::from_meshes(data.meshes)?;
    info!("training on {} models ({} meshes)", set.len(), data.records.len());

    let checkpoint = run.out_dir.join(CHECKPOINT_NAME);
    let trace_path = run.out_dir.join(TRACE_NAME);
    let trainer = if resume && checkpoint.exists() {
        let ck = Checkpoint::load(&checkpoint)?;
        info!("resuming from epoch {}", ck.epoch);
        Trainer::<T>::resume(run.train, &ck)?
    } else {
        Trainer::<T>::new(run.train)?
    };
    let resumed = trainer.epoch > 0;
    crate::files::create_dir(&run.out_dir)?;
    write_text(&run.out_dir.join("config.txt"), &run.train.to_text())?;
    let (trainer, rows) = run_training(trainer, &set, Some(&checkpoint))?;
    // A resumed run appends to the existing trace.
    let mut trace = trace_csv(&rows);
    if resumed && trace_path.exists() {
        let previous = read_text(&trace_path)?;
        trace = previous + trace.split_once('\n').map_or("", |(_, body)| body);
    }
    write_text(&trace_path, &trace)?;
    match rows.last() {
        Some(last) => println!(
            "trained to epoch {}; last batch loss {:.6}; wrote {} and {}",
            trainer.epoch,
            last.total,
            checkpoint.display(),
            trace_path.display()
        ),
        None => println!("already at epoch {}; nothing to do", trainer.epoch),
    }
    Ok(())
}

pub fn embed(checkpoint: &Path, manifest: &Path, walks: Option<usize>, out: &Path, csv: Option<&Path>) -> CliResult<()> {
    let ck = Checkpoint::load(checkpoint)?;
    set_threads(ck.config.threads);
    let data = load_manifest(manifest, |_| true)?;
    let n_walks = walks.unwrap_or(ck.config.embed_walks);
    let cfg = &ck.config;
    let features = match cfg.precision {
        Precision::F32 => embed_dataset(&ck.model.cast::<f32>(), &data.meshes, n_walks, &cfg.walk, cfg.seed)?,
        Precision::F64 => embed_dataset(&ck.model, &data.meshes, n_walks, &cfg.walk, cfg.seed)?,
    };
    let records: Vec<EmbeddingRecord> = features
        .iter()
        .map(|f| EmbeddingRecord {
            source_id: f.source_id.clone(),
            label: f.label.clone(),
            split: data.records.iter().find(|r| r.source_id == f.source_id).and_then(|r| r.split),
            vector: f.values.clone(),
        })
        .collect();
    write_text(out, &embeddings_text(&records))?;
    if let Some(csv) = csv {
        write_text(csv, &meshwalk::eval::embeddings_csv(&features))?;
    }
    println!("embedded {} models into {}", records.len(), out.display());
    Ok(())
}

pub fn gradcheck(preset: &str) -> CliResult<()> {
    let cfg = match preset {
        "desk" => SuiteConfig::desk(),
        "small" => SuiteConfig::small(),
        other => return Err(CliError::Config(format!("unknown gradcheck preset `{other}` (desk, small)"))),
    };
    let checks = run_suite(&cfg);
    println!("{:<12} {:>14} {:>8}  result", "layer", "max_rel_error", "checked");
    for c in &checks {
        println!(
            "{:<12} {:>14.3e} {:>8}  {}",
            c.name,
            c.report.max_rel_error,
            c.report.checked,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_reports_all_missing_keys() {
        let err = RunConfig::parse("walk_len = 16\n").unwrap_err();
        let CliError::Config(msg) = &err else { panic!("{err:?}") };
        for key in ["preset", "epochs", "seed", "manifest", "out_dir"] {
            assert!(msg.contains(key), "{msg}");
        }
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn run_config_rejects_unknown_keys() {
        let text = "preset = desk\nepochs = 1\nseed = 0\nmanifest = m\nout_dir = o\nwalk_length = 3\n";
        let err = RunConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("unknown keys: walk_length"), "{err}");
    }

    #[test]
    fn run_config_parses() {
        let text = "# run\npreset = desk\nepochs = 2\nseed = 5\nmanifest = data/m.jsonl\nout_dir = runs/a\nbatch_size = 4\n";
        let run = RunConfig::parse(text).unwrap();
        assert_eq!(run.train.epochs, 2);
        assert_eq!(run.train.batch_size, 4);
        assert_eq!(run.out_dir, PathBuf::from("runs/a"));
    }
}

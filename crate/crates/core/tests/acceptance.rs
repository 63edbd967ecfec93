//! Acceptance checks. Every check prints one `PASS`/`FAIL` line on stderr
//! (written straight to the handle so the lines survive output capture)
//! before asserting.
//!
//! The full-scale run is ignored by default; point `MESHWALK_SHREC11` at a
//! class-per-folder copy of SHREC11 and run
//! `cargo test --release -p meshwalk --test acceptance -- --ignored`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use meshwalk::eval::{
    average_precision, classification_report, labelled, mean_average_precision, svm_train, RetrievalIndex,
    SvmConfig,
};
use meshwalk::gradsuite::{run_suite, SuiteConfig, TOLERANCE};
use meshwalk::losses::{assign_pair, kmeans_loss, nt_xent, wcss, ClusterState, EmbeddingBatch};
use meshwalk::manifest::{synthesize, ManifestRecord, Split};
use meshwalk::mesh::{gen_synthetic, read_mesh_file, MeshFormat, Rotation, ShapeClass, ShapeParams};
use meshwalk::pipeline::{embed_dataset, train, FeatureVector, Preset, TrainConfig, Trainer, TrainingSet};
use meshwalk::resample::{resample_to, ResampleTargets};
use meshwalk::rng;
use meshwalk::walker::{seeded_walk, Surface, WalkConfig};
use meshwalk::Mesh;
use rand::seq::SliceRandom;
use rand::Rng;

const GRADIENT_BUDGET: Duration = Duration::from_secs(120);
const NT_XENT_ORTHOGONAL: f64 = 0.55144;
const NT_XENT_TOLERANCE: f64 = 1e-5;
const MAP_ORACLE_TOLERANCE: f64 = 1e-12;
const FACE_TOLERANCE: f64 = 0.02;
const RADIUS_GROWTH: f64 = 1.05;
const MIN_MAP: f64 = 0.80;
const MIN_SVM_ACCURACY: f64 = 0.85;
const END_TO_END_BUDGET: Duration = Duration::from_secs(30 * 60);
const REFERENCE_MAP: f64 = 0.941;
const REFERENCE_MAP_SLACK: f64 = 0.10;

fn verdict(name: &str, pass: bool, detail: impl Display) -> bool {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    pass
}

#[test]
fn gradient_suite() {
    let start = Instant::now();
    let checks = run_suite(&SuiteConfig::desk());
    let elapsed = start.elapsed();
    let worst = checks.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:.1e}", c.name, c.report.max_rel_error))
        .collect();
    let names: Vec<&str> = checks.iter().map(|c| c.name).collect();
    let complete = ["dense", "relu", "gru_bptt", "projection", "nt_xent", "kmeans", "composite"]
        .iter()
        .all(|n| names.contains(n));
    let pass = complete && checks.iter().all(|c| c.passed()) && elapsed < GRADIENT_BUDGET;
    verdict(
        "gradient suite",
        pass,
        format!("max rel error {worst:.2e} (< {TOLERANCE:e}) in {elapsed:.1?} [{}]", detail.join(", ")),
    );
    assert!(pass);
}

/// Textbook NT-Xent over 2N rows, pairs (2i, 2i+1), self excluded.
fn nt_xent_reference(rows: &[Vec<f64>], tau: f64) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let n = rows.len();
    let mut total = 0.0;
    for i in 0..n {
        let pos = i ^ 1;
        let denom: f64 = (0..n).filter(|&k| k != i).map(|k| (cos(&rows[i], &rows[k]) / tau).exp()).sum();
        total -= ((cos(&rows[i], &rows[pos]) / tau).exp() / denom).ln();
    }
    total / n as f64
}

#[test]
fn loss_oracles() {
    let mut ok = true;

    let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
    let (loss, _) = nt_xent(&EmbeddingBatch::from_rows(&rows).unwrap(), 1.0).unwrap();
    let reference = nt_xent_reference(&rows, 1.0);
    let closed = (1.0 + 2.0 / std::f64::consts::E).ln();
    ok &= verdict(
        "nt_xent orthogonal pairs",
        (loss - NT_XENT_ORTHOGONAL).abs() <= NT_XENT_TOLERANCE
            && (loss - reference).abs() <= 1e-12
            && (loss - closed).abs() <= 1e-12,
        format!("{loss:.8} vs {NT_XENT_ORTHOGONAL} ± {NT_XENT_TOLERANCE:e} (reference {reference:.8})"),
    );

    let mut r = rng::stream(5, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let tau = r.random_range(0.1..1.0);
        let (loss, _) = nt_xent(&EmbeddingBatch::from_rows(&rows).unwrap(), tau).unwrap();
        worst = worst.max((loss - nt_xent_reference(&rows, tau)).abs());
    }
    ok &= verdict("nt_xent random batches vs reference", worst <= 1e-12, format!("max |diff| {worst:.1e}"));

    let (single, _) = nt_xent(&EmbeddingBatch::from_rows(&[vec![0.3, -2.0, 1.0], vec![-1.0, 0.5, 4.0]]).unwrap(), 0.5).unwrap();
    ok &= verdict("nt_xent single pair", single == 0.0, format!("loss {single}"));

    let batch = EmbeddingBatch::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    let (km, grads) = kmeans_loss(&batch, &[0], &[vec![1.0, 0.0]]).unwrap();
    let zero_case = EmbeddingBatch::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
    let (km_zero, _) = kmeans_loss(&zero_case, &[1], &[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
    ok &= verdict(
        "kmeans_loss hand cases",
        km == 1.0 && grads == vec![-1.0, 0.0, 1.0, 0.0] && km_zero == 0.0,
        format!("loss {km} grads {grads:?}; at means {km_zero}"),
    );

    let means = vec![vec![0.0, 2.0], vec![9.0, 0.0]];
    let a = assign_pair(&[0.0, 0.0], &[10.0, 0.0], &means);
    let tie = assign_pair(&[0.0, 0.0], &[0.0, 0.0], &[vec![1.0, 0.0], vec![5.0, 5.0], vec![-1.0, 0.0]]);
    let exact = assign_pair(&[3.0, 3.0], &[3.0, 3.0], &[vec![0.0; 2], vec![1.0; 2], vec![2.0; 2], vec![3.0; 2]]);
    ok &= verdict(
        "assign_pair hand cases",
        a == 1 && tie == 0 && exact == 3,
        format!("nearest {a}, tie {tie}, exact {exact}"),
    );

    let mut increases = 0;
    for seed in 0..100u64 {
        let mut r = rng::stream(seed, &[1]);
        let k = r.random_range(2..6);
        let dim = r.random_range(1..6);
        let n = r.random_range(k..40);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let means: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let assignments: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut state = ClusterState::new(means.clone());
        for (row, &c) in rows.iter().zip(&assignments) {
            state.accumulate(row, c);
        }
        let before = wcss(&rows, &assignments, &means);
        state.update_means(1);
        if wcss(&rows, &assignments, &state.means) > before {
            increases += 1;
        }
    }
    ok &= verdict("means update vs WCSS", increases == 0, format!("{increases} of 100 instances increased"));
    assert!(ok);
}

/// AP by pairwise counting: the rank of each relevant item is one plus the
/// number of items strictly ahead of it (closer, or equally close with a
/// smaller id).
fn map_brute_force(items: &[(String, usize, Vec<f64>)]) -> Option<f64> {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut aps = Vec::new();
    for (qi, (_, ql, qv)) in items.iter().enumerate() {
        let others: Vec<usize> = (0..items.len()).filter(|&j| j != qi).collect();
        let ahead = |j: usize, k: usize| {
            let (dj, dk) = (d(qv, &items[j].2), d(qv, &items[k].2));
            dj < dk || (dj == dk && items[j].0 < items[k].0)
        };
        let rank = |k: usize| 1 + others.iter().filter(|&&j| j != k && ahead(j, k)).count();
        let relevant: Vec<usize> = others.iter().copied().filter(|&j| items[j].1 == *ql).collect();
        if relevant.is_empty() {
            continue;
        }
        let ap: f64 = relevant
            .iter()
            .map(|&k| {
                let rk = rank(k);
                let hits = relevant.iter().filter(|&&j| rank(j) <= rk).count();
                hits as f64 / rk as f64
            })
            .sum::<f64>()
            / relevant.len() as f64;
        aps.push(ap);
    }
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

#[test]
fn map_oracle() {
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for seed in 0..50u64 {
        let mut r = rng::stream(seed, &[2]);
        let n = r.random_range(2..=40);
        let classes = r.random_range(1..=5);
        let dim = r.random_range(1..=4);
        // Small integer coordinates produce plenty of exact distance ties.
        let items: Vec<(String, usize, Vec<f64>)> = (0..n)
            .map(|i| {
                let v = (0..dim).map(|_| r.random_range(-3..=3) as f64).collect();
                (format!("item{:02}", (i * 17) % 41), r.random_range(0..classes), v)
            })
            .collect();
        let index = RetrievalIndex::new(
            items
                .iter()
                .map(|(id, c, v)| FeatureVector { source_id: id.clone(), label: Some(format!("c{c}")), values: v.clone() })
                .collect(),
        )
        .unwrap();
        let queries: Vec<&str> = items.iter().map(|i| i.0.as_str()).collect();
        let ours = mean_average_precision(&index, &queries).ok().map(|m| m.map);
        match (ours, map_brute_force(&items)) {
            (Some(a), Some(b)) => {
                worst = worst.max((a - b).abs());
                compared += 1;
            }
            (None, None) => {}
            (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
        }
    }
    let ap = average_precision(&[true, false, true, false], 2).unwrap();
    let hand = [
        (ap, 5.0 / 6.0),
        (average_precision(&[true, true, false], 2).unwrap(), 1.0),
        (average_precision(&[false, false], 1).unwrap(), 0.0),
    ];
    let pass_oracle = verdict(
        "mAP vs brute force",
        worst <= MAP_ORACLE_TOLERANCE,
        format!("{compared} instances, max |diff| {worst:.1e}"),
    );
    let pass_hand = verdict(
        "AP hand cases",
        hand.iter().all(|(a, b)| (a - b).abs() <= 1e-15),
        format!("[1,0,1,0] R=2 -> {ap:.5}"),
    );
    assert!(pass_oracle && pass_hand);
}

#[test]
fn walk_validity() {
    let mut violations = 0;
    let mut nondeterministic = 0;
    let mut walks = 0;
    let mut all_jumps = true;
    for (c, &class) in ShapeClass::ALL.iter().enumerate() {
        for m in 0..4u64 {
            let mesh = gen_synthetic(class, &ShapeParams::default(), 100 * c as u64 + m).unwrap();
            let surface = Surface::from_mesh(&mesh);
            for w in 0..50u64 {
                let config = WalkConfig { length: 128, jump_prob: [0.0, 0.05, 0.3][w as usize % 3] };
                let seed = rng::derive_seed(c as u64, &[m, w]);
                let walk = seeded_walk(&surface, &config, seed).unwrap();
                walks += 1;
                violations += walk
                    .vertex_indices
                    .windows(2)
                    .zip(&walk.jump_flags[1..])
                    .filter(|(p, &jump)| !jump && !surface.adjacency.contains(p[0], p[1]))
                    .count();
                if seeded_walk(&surface, &config, seed).unwrap() != walk {
                    nondeterministic += 1;
                }
            }
            let certain = seeded_walk(&surface, &WalkConfig { length: 64, jump_prob: 1.0 }, m).unwrap();
            all_jumps &= certain.jump_flags.iter().all(|&j| j);
        }
    }
    let pass = [
        verdict("walk adjacency", violations == 0, format!("{violations} bad steps in {walks} walks")),
        verdict("walk p=1 jumps", all_jumps, "every step flagged as a jump"),
        verdict("walk determinism", nondeterministic == 0, format!("{nondeterministic} of {walks} walks differed on replay")),
    ];
    assert!(walks >= 1000 && pass.iter().all(|&p| p));
}

/// Settings of the end-to-end synthetic run. Shapes keep their random
/// proportions and tessellation but are generated upright: walk steps are raw
/// coordinates, so under random rotations two walks of one mesh can be told
/// apart from other meshes by orientation alone. The rotated set is still
/// trained and reported, without a threshold.
const SYNTH_SEED: u64 = 2024;
const TRAIN_SEED: u64 = 7;
const LEARNING_RATE: f64 = 5e-4;
const TEMPERATURE: f64 = 0.2;
const JUMP_PROB: f64 = 0.5;

struct SyntheticSet {
    sources: Vec<Mesh>,
    records: Vec<ManifestRecord>,
    resampled: Vec<Vec<Mesh>>,
    resample_time: Duration,
}

fn build_set(rotation: Rotation) -> SyntheticSet {
    let start = Instant::now();
    let params = ShapeParams { rotation, ..Default::default() };
    let (sources, records) = synthesize(&ShapeClass::ALL, 20, &params, SYNTH_SEED).unwrap();
    let targets = ResampleTargets::default();
    let resampled = sources.iter().map(|m| resample_to(m, &targets).unwrap()).collect();
    SyntheticSet { sources, records, resampled, resample_time: start.elapsed() }
}

fn synthetic_set() -> &'static SyntheticSet {
    static SET: OnceLock<SyntheticSet> = OnceLock::new();
    SET.get_or_init(|| build_set(Rotation::None))
}

fn rotated_set() -> &'static SyntheticSet {
    static SET: OnceLock<SyntheticSet> = OnceLock::new();
    SET.get_or_init(|| build_set(Rotation::Full))
}

#[test]
fn resampling() {
    let set = rotated_set();
    let targets = ResampleTargets::default();
    let mut worst_faces: f64 = 0.0;
    let mut worst_radius: f64 = 0.0;
    let mut ids_kept = true;
    for (source, outs) in set.sources.iter().zip(&set.resampled) {
        let (center, radius) = (source.centroid(), source.bounding_radius());
        for (out, &target) in outs.iter().zip(&targets.face_counts) {
            worst_faces = worst_faces.max(out.face_count().abs_diff(target) as f64 / target as f64);
            worst_radius = worst_radius.max(out.radius_about(&center) / radius);
            ids_kept &= out.source_id == source.source_id;
        }
    }
    let outputs: usize = set.resampled.iter().map(Vec::len).sum();
    let pass = [
        verdict(
            "resampled face counts",
            worst_faces <= FACE_TOLERANCE && outputs == 3 * set.sources.len(),
            format!("{outputs} meshes, worst deviation {:.2}% (in {:.1?})", 100.0 * worst_faces, set.resample_time),
        ),
        verdict(
            "resampled extent",
            worst_radius <= RADIUS_GROWTH,
            format!("worst radius ratio {worst_radius:.4} (limit {RADIUS_GROWTH})"),
        ),
        verdict("resampled source ids", ids_kept, "shared by every variant"),
    ];
    assert!(pass.iter().all(|&p| p));
}

struct RunResult {
    map: f64,
    accuracy: f64,
    elapsed: Duration,
}

fn synthetic_run(set: &SyntheticSet, alpha: f64) -> RunResult {
    let start = Instant::now();
    let split_of: BTreeMap<&str, Option<Split>> =
        set.records.iter().map(|r| (r.source_id.as_str(), r.split)).collect();

    let mut config = TrainConfig::new(Preset::Desk, 120, TRAIN_SEED);
    config.batch_size = 8;
    config.walk = WalkConfig { length: 64, jump_prob: JUMP_PROB };
    config.loss.clusters = 10;
    config.loss.cluster_start_epoch = 30;
    config.loss.means_update_period = 5;
    config.loss.alpha = alpha;
    config.loss.temperature = TEMPERATURE;
    config.adam.learning_rate = LEARNING_RATE;

    let train_meshes = set
        .resampled
        .iter()
        .flatten()
        .filter(|m| split_of[m.source_id.as_str()] == Some(Split::Train))
        .cloned();
    let training = TrainingSet::from_meshes(train_meshes).unwrap();
    let (trainer, _) = train(Trainer::<f32>::new(config).unwrap(), &training, None).unwrap();
    let all: Vec<Mesh> = set.resampled.iter().flatten().cloned().collect();
    let features = embed_dataset(&trainer.model, &all, config.embed_walks, &config.walk, config.seed).unwrap();

    let test_ids: Vec<&str> = features
        .iter()
        .map(|f| f.source_id.as_str())
        .filter(|id| split_of[id] == Some(Split::Test))
        .collect();
    let map = mean_average_precision(&RetrievalIndex::new(features.clone()).unwrap(), &test_ids).unwrap().map;
    let (tr, te): (Vec<_>, Vec<_>) =
        features.into_iter().partition(|f| split_of[f.source_id.as_str()] == Some(Split::Train));
    let svm = svm_train(&labelled(&tr), &SvmConfig::default()).unwrap();
    let accuracy = classification_report(&svm, &labelled(&te)).unwrap().accuracy;
    RunResult { map, accuracy, elapsed: start.elapsed() }
}

#[test]
fn end_to_end_synthetic() {
    let set = synthetic_set();
    let with = synthetic_run(set, 1.0);
    let without = synthetic_run(set, 0.0);
    let rotated = synthetic_run(rotated_set(), 1.0);
    let within_budget = with.elapsed + set.resample_time < END_TO_END_BUDGET;
    let pass_map = verdict(
        "end-to-end retrieval",
        with.map >= MIN_MAP && within_budget,
        format!("mAP {:.4} (>= {MIN_MAP}) in {:.1?}", with.map, with.elapsed),
    );
    let pass_svm = verdict(
        "end-to-end svm",
        with.accuracy >= MIN_SVM_ACCURACY,
        format!("accuracy {:.4} (>= {MIN_SVM_ACCURACY})", with.accuracy),
    );
    verdict(
        "clustering ablation",
        true,
        format!(
            "alpha=1: mAP {:.4} svm {:.4} | alpha=0: mAP {:.4} svm {:.4} ({:.1?})",
            with.map, with.accuracy, without.map, without.accuracy, without.elapsed
        ),
    );
    let _ = std::io::stderr().lock().write_all(
        format!(
            "INFO randomly rotated shapes (alpha=1): mAP {:.4} svm {:.4}\n",
            rotated.map, rotated.accuracy
        )
        .as_bytes(),
    );
    assert!(pass_map && pass_svm);
}

/// `root/<class>/<model>.{off,obj}`, sorted.
fn class_folders(root: &Path) -> Vec<(String, Vec<PathBuf>)> {
    let mut classes = Vec::new();
    for dir in std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()) {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| MeshFormat::from_path(p).is_some())
            .collect();
        files.sort();
        classes.push((dir.file_name().unwrap().to_string_lossy().into_owned(), files));
    }
    classes.sort();
    classes
}

#[test]
#[ignore = "needs a SHREC11 copy and many hours of training"]
fn shrec11_split16() {
    let root = PathBuf::from(std::env::var("MESHWALK_SHREC11").expect("set MESHWALK_SHREC11"));
    let mut shuffle = rng::stream(0, &[16]);
    let mut meshes = Vec::new();
    let mut is_test = BTreeMap::new();
    for (class, mut files) in class_folders(&root) {
        files.shuffle(&mut shuffle);
        for (i, path) in files.iter().enumerate() {
            let id = format!("{class}/{}", path.file_stem().unwrap().to_string_lossy());
            let mesh = read_mesh_file(path, Some(&id)).unwrap().with_label(class.clone());
            is_test.insert(id, i >= 16);
            meshes.push(mesh);
        }
    }
    let targets = ResampleTargets::default();
    let resampled: Vec<Mesh> = meshes.iter().flat_map(|m| resample_to(m, &targets).unwrap()).collect();
    let config = TrainConfig::new(Preset::Paper, 300, 0);
    let training = TrainingSet::from_meshes(resampled.iter().filter(|m| !is_test[&m.source_id]).cloned()).unwrap();
    let (trainer, _) = train(Trainer::<f32>::new(config).unwrap(), &training, None).unwrap();
    let features = embed_dataset(&trainer.model, &resampled, config.embed_walks, &config.walk, config.seed).unwrap();
    let queries: Vec<&str> = features.iter().map(|f| f.source_id.as_str()).filter(|id| is_test[*id]).collect();
    let map = mean_average_precision(&RetrievalIndex::new(features.clone()).unwrap(), &queries).unwrap().map;
    let pass = verdict(
        "SHREC11 split-16 retrieval",
        map >= REFERENCE_MAP - REFERENCE_MAP_SLACK,
        format!("mAP {map:.4} (reference {REFERENCE_MAP}, allowed gap {REFERENCE_MAP_SLACK})"),
    );
    assert!(pass);
}

//! Finite-difference verification of every hand-written backward pass,
//! layer by layer and end to end, in `f64`.

use rand::seq::index::sample;
use rand::Rng;

use crate::losses::{
    kmeans_loss, normalize_backward, nt_xent, ClusterState, EmbeddingBatch, LossConfig,
};
use crate::mesh::{gen_synthetic, normalize_mesh, ShapeClass, ShapeParams};
use crate::nn::{
    grad_check_at, relu_backward_in_place, relu_in_place, Dense, GradCheckReport, GruLayer, Model,
    NetworkShape, Parameters,
};
use crate::pipeline::loss_and_grad;
use crate::rng::{self, StreamRng};
use crate::walker::{batch_for_models, ModelSurfaces, StepSequence, Surface, WalkConfig};

/// Every check must stay below this relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub shape: NetworkShape,
    pub steps: usize,
    /// Positive pairs in the loss batches.
    pub pairs: usize,
    pub epsilon: f64,
    /// Random coordinates per check, on top of a few from every tensor.
    pub coords: usize,
    pub seed: u64,
}

impl SuiteConfig {
    /// Desk network widths with 8-step walks.
    pub fn desk() -> Self {
        SuiteConfig {
            shape: NetworkShape::desk(),
            steps: 8,
            pairs: 4,
            epsilon: 1e-5,
            coords: 300,
            seed: 17,
        }
    }

    /// Tiny widths (GRU hidden [8, 8, 16]) where most coordinates get checked.
    pub fn small() -> Self {
        SuiteConfig {
            shape: NetworkShape {
                fc_in: [8, 8],
                gru: [8, 8, 16],
                projection: [8, 4],
            },
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < TOLERANCE
    }
}

fn uniform(r: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn unit_vector(r: &mut StreamRng, dim: usize) -> Vec<f64> {
    let v = uniform(r, dim);
    let n = dot(&v, &v).sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `coords` random indices plus up to `per_segment` from every segment.
fn pick(r: &mut StreamRng, segments: &[usize], coords: usize, per_segment: usize) -> Vec<usize> {
    let total: usize = segments.iter().sum();
    let mut idx = sample(r, total, coords.min(total)).into_vec();
    let mut offset = 0;
    for &len in segments {
        idx.extend(sample(r, len, per_segment.min(len)).into_iter().map(|i| offset + i));
        offset += len;
    }
    idx.sort_unstable();
    idx.dedup();
    idx
}

fn segments<P: Parameters<f64>>(p: &P) -> Vec<usize> {
    p.tensors().iter().map(|t| t.len()).collect()
}

/// Initialized weights plus random biases: zero biases leave activations
/// tiny, which puts ReLU kinks and the embedding normalization within
/// finite-difference range of the test point.
fn test_model(shape: NetworkShape, seed: u64) -> Model<f64> {
    let mut model = Model::<f64>::init(shape, seed);
    let mut r = rng::stream(seed, &[0xb1a5]);
    let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(model.tensors_mut()) {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.1..0.1));
        }
    }
    model
}

fn walk_batch(cfg: &SuiteConfig, n: usize) -> Vec<StepSequence> {
    let models: Vec<ModelSurfaces> = (0..n)
        .map(|i| {
            let class = ShapeClass::ALL[i % ShapeClass::ALL.len()];
            let mesh = gen_synthetic(class, &ShapeParams::default(), cfg.seed + i as u64).expect("valid params");
            ModelSurfaces {
                source_id: mesh.source_id.clone(),
                surfaces: vec![Surface::from_mesh(&normalize_mesh(&mesh).expect("non-degenerate"))],
            }
        })
        .collect();
    let walk = WalkConfig {
        length: cfg.steps,
        jump_prob: 0.05,
    };
    let all: Vec<usize> = (0..n).collect();
    batch_for_models(&models, &all, &walk, cfg.seed, 0)
        .expect("walkable meshes")
        .sequences
}

fn check_dense(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let (rows, inputs, outputs) = (4, 6, 5);
    let layer = Dense::<f64>::init(inputs, outputs, r);
    let x = uniform(r, rows * inputs);
    let c = uniform(r, rows * outputs);
    let n_params = layer.num_params();
    let eval = |t: &[f64]| {
        let mut l = Dense::zeros(inputs, outputs);
        l.assign_flat(&t[..n_params]);
        dot(&l.forward(&t[n_params..], rows).unwrap(), &c)
    };
    let mut g = Dense::zeros(inputs, outputs);
    let dx = layer.backward(&x, &c, rows, &mut g);
    let theta = [layer.flatten(), x].concat();
    let analytic = [g.flatten(), dx].concat();
    grad_check_at(eval, &theta, &analytic, cfg.epsilon, &(0..theta.len()).collect::<Vec<_>>())
}

fn check_relu(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let (rows, inputs, outputs) = (4, 6, 5);
    let layer = Dense::<f64>::init(inputs, outputs, r);
    let x = uniform(r, rows * inputs);
    let c = uniform(r, rows * outputs);
    let run = |x: &[f64]| {
        let mut y = layer.forward(x, rows).unwrap();
        relu_in_place(&mut y);
        y
    };
    let y = run(&x);
    let mut dy = c.clone();
    relu_backward_in_place(&y, &mut dy);
    let mut g = Dense::zeros(inputs, outputs);
    let dx = layer.backward(&x, &dy, rows, &mut g);
    grad_check_at(
        |t| dot(&run(t), &c),
        &x,
        &dx,
        cfg.epsilon,
        &(0..x.len()).collect::<Vec<_>>(),
    )
}

fn check_gru(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let (inputs, hidden, batch) = (cfg.shape.fc_in[1], cfg.shape.gru[0], 3);
    let layer = GruLayer::<f64>::init(inputs, hidden, r);
    let x = uniform(r, cfg.steps * batch * inputs);
    // Weight every time step's hidden state so gradients flow through time.
    let c = uniform(r, cfg.steps * batch * hidden);
    let n_params = layer.num_params();
    let eval = |t: &[f64]| {
        let mut l = GruLayer::zeros(inputs, hidden);
        l.assign_flat(&t[..n_params]);
        dot(&l.forward(&t[n_params..], cfg.steps, batch, "gru").unwrap().hidden, &c)
    };
    let cache = layer.forward(&x, cfg.steps, batch, "gru").unwrap();
    let mut g = GruLayer::zeros(inputs, hidden);
    let dx = layer.backward(&cache, &c, &mut g);
    let theta = [layer.flatten(), x].concat();
    let analytic = [g.flatten(), dx].concat();
    let mut segs = segments(&layer);
    segs.push(theta.len() - n_params);
    let idx = pick(r, &segs, cfg.coords, 16);
    grad_check_at(eval, &theta, &analytic, cfg.epsilon, &idx)
}

fn check_encoder(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let model = test_model(cfg.shape, cfg.seed);
    let seqs = walk_batch(cfg, 3);
    let c = uniform(r, seqs.len() * cfg.shape.feature_dim());
    let eval = |t: &[f64]| {
        let mut m = model.zeros_like();
        m.assign_flat(t);
        dot(&m.encoder.forward(&seqs).unwrap().0, &c)
    };
    let (_, cache) = model.encoder.forward(&seqs).unwrap();
    let mut g = model.zeros_like();
    model.encoder.backward(&cache, &c, &mut g.encoder).unwrap();
    let theta = model.flatten();
    let analytic = g.flatten();
    let mut segs = segments(&model.encoder);
    segs.push(theta.len() - segs.iter().sum::<usize>());
    // The projection tail has zero gradient here; skip it.
    let idx: Vec<usize> = pick(r, &segs[..segs.len() - 1], cfg.coords, 8);
    grad_check_at(eval, &theta, &analytic, cfg.epsilon, &idx)
}

fn check_projection(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let shape = cfg.shape;
    let batch = 4;
    let head = test_model(shape, cfg.seed + 1).projection;
    let x = uniform(r, batch * shape.feature_dim());
    let c = uniform(r, batch * shape.embedding_dim());
    let n_params = head.num_params();
    let eval = |t: &[f64]| {
        let mut h = head.clone();
        h.assign_flat(&t[..n_params]);
        dot(&h.forward(&t[n_params..], batch).unwrap().0, &c)
    };
    let (_, cache) = head.forward(&x, batch).unwrap();
    let mut g = head.clone();
    g.zero();
    let dx = head.backward(&cache, &c, &mut g).unwrap();
    let theta = [head.flatten(), x].concat();
    let analytic = [g.flatten(), dx].concat();
    let mut segs = segments(&head);
    segs.push(theta.len() - n_params);
    grad_check_at(eval, &theta, &analytic, cfg.epsilon, &pick(r, &segs, cfg.coords, 16))
}

fn check_nt_xent(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let (rows, dim) = (2 * cfg.pairs, cfg.shape.embedding_dim());
    let z = uniform(r, rows * dim);
    let loss = |t: &[f64]| nt_xent(&EmbeddingBatch::new(rows, dim, t.to_vec()).unwrap(), 0.5).unwrap();
    let (_, g) = loss(&z);
    grad_check_at(|t| loss(t).0, &z, &g, cfg.epsilon, &pick(r, &[z.len()], cfg.coords, 0))
}

/// K-means loss chained through the row normalization, with the pair
/// assignments frozen at the unperturbed point.
fn check_kmeans(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let (rows, dim) = (2 * cfg.pairs, cfg.shape.embedding_dim());
    let z = uniform(r, rows * dim);
    let means: Vec<Vec<f64>> = (0..3).map(|_| unit_vector(r, dim)).collect();
    let assign: Vec<usize> = (0..cfg.pairs).map(|p| p % means.len()).collect();
    let loss = |t: &[f64]| {
        let raw = EmbeddingBatch::new(rows, dim, t.to_vec()).unwrap();
        let unit = raw.normalized().unwrap();
        let (l, d_unit) = kmeans_loss(&unit, &assign, &means).unwrap();
        (l, normalize_backward(&raw, &unit, &d_unit))
    };
    let (_, g) = loss(&z);
    grad_check_at(|t| loss(t).0, &z, &g, cfg.epsilon, &pick(r, &[z.len()], cfg.coords, 0))
}

/// Walks → encoder → projection → NT-Xent + K-means, against every
/// parameter tensor.
fn check_composite(cfg: &SuiteConfig, r: &mut StreamRng) -> GradCheckReport {
    let model = test_model(cfg.shape, cfg.seed + 2);
    let seqs = walk_batch(cfg, cfg.pairs);
    // Random unit means rather than k-means++ over this batch: seeding from
    // the batch itself places means on the rows, where pair assignments
    // sit on ties and the loss is not differentiable.
    let k = 3;
    let clusters = ClusterState::new((0..k).map(|_| unit_vector(r, cfg.shape.embedding_dim())).collect());
    let loss_cfg = LossConfig {
        clusters: k,
        cluster_start_epoch: 0,
        ..Default::default()
    };
    let eval = |t: &[f64]| {
        let mut m = model.zeros_like();
        m.assign_flat(t);
        let mut state = clusters.clone();
        loss_and_grad(&m, &seqs, Some(&mut state), &loss_cfg, 0).unwrap().0.total
    };
    let (_, g) = loss_and_grad(&model, &seqs, Some(&mut clusters.clone()), &loss_cfg, 0).unwrap();
    let theta = model.flatten();
    let idx = pick(r, &segments(&model), cfg.coords, 8);
    grad_check_at(eval, &theta, &g.flatten(), cfg.epsilon, &idx)
}

/// Run every check. Names: dense, relu, gru_bptt, encoder, projection,
/// nt_xent, kmeans, composite.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<LayerCheck> {
    type Check = fn(&SuiteConfig, &mut StreamRng) -> GradCheckReport;
    let checks: [(&'static str, Check); 8] = [
        ("dense", check_dense),
        ("relu", check_relu),
        ("gru_bptt", check_gru),
        ("encoder", check_encoder),
        ("projection", check_projection),
        ("nt_xent", check_nt_xent),
        ("kmeans", check_kmeans),
        ("composite", check_composite),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, (name, f))| LayerCheck {
            name,
            report: f(cfg, &mut rng::stream(cfg.seed, &[i as u64])),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_network_passes_everywhere() {
        for check in run_suite(&SuiteConfig::small()) {
            assert!(check.passed(), "{}: {:?}", check.name, check.report);
            assert!(check.report.checked > 0);
        }
    }
}

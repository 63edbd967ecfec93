//! Walk encoder and projection head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_finite, relu_backward_in_place, relu_in_place, Dense, GruCache, GruLayer, NnError,
    Parameters, Tensor,
};
use crate::rng;
use crate::walker::StepSequence;
use crate::Real;

/// Layer widths. The input is always the 3 coordinates of a walk step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub fc_in: [usize; 2],
    pub gru: [usize; 3],
    pub projection: [usize; 2],
}

impl NetworkShape {
    pub const INPUT: usize = 3;

    /// 3→128→256, GRU [256, 256, 2048], 2048→2048, head 2048→512→256.
    pub fn paper() -> Self {
        NetworkShape {
            fc_in: [128, 256],
            gru: [256, 256, 2048],
            projection: [512, 256],
        }
    }

    /// Reduced widths for CPU-scale runs and tests.
    pub fn desk() -> Self {
        NetworkShape {
            fc_in: [32, 64],
            gru: [64, 64, 128],
            projection: [64, 32],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.gru[2]
    }

    pub fn embedding_dim(&self) -> usize {
        self.projection[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub fc_in: [Dense<T>; 2],
    pub gru: [GruLayer<T>; 3],
    pub fc_out: Dense<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams<T> {
    pub hidden: Dense<T>,
    pub output: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    pub steps: usize,
    pub batch: usize,
    input: Vec<T>,
    fc1: Vec<T>,
    fc2: Vec<T>,
    gru: Vec<GruCache<T>>,
}

#[derive(Debug, Clone)]
pub struct ProjectionCache<T> {
    pub batch: usize,
    input: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Real> EncoderParams<T> {
    pub fn zeros(shape: &NetworkShape) -> Self {
        let [a, e] = shape.fc_in;
        let [h1, h2, h3] = shape.gru;
        EncoderParams {
            fc_in: [Dense::zeros(NetworkShape::INPUT, a), Dense::zeros(a, e)],
            gru: [GruLayer::zeros(e, h1), GruLayer::zeros(h1, h2), GruLayer::zeros(h2, h3)],
            fc_out: Dense::zeros(h3, h3),
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: &NetworkShape, rng: &mut R) -> Self {
        let [a, e] = shape.fc_in;
        let [h1, h2, h3] = shape.gru;
        EncoderParams {
            fc_in: [Dense::init(NetworkShape::INPUT, a, rng), Dense::init(a, e, rng)],
            gru: [
                GruLayer::init(e, h1, rng),
                GruLayer::init(h1, h2, rng),
                GruLayer::init(h2, h3, rng),
            ],
            fc_out: Dense::init(h3, h3, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.fc_out.outputs()
    }

    /// Time-major `[L, B, 3]` input from equal-length sequences.
    pub fn pack(seqs: &[StepSequence]) -> Result<(Vec<T>, usize), NnError> {
        let Some(first) = seqs.first() else {
            return Err(NnError::Empty("no sequences".into()));
        };
        let steps = first.len();
        if steps == 0 {
            return Err(NnError::Empty("zero-length sequence".into()));
        }
        if let Some(bad) = seqs.iter().find(|s| s.len() != steps) {
            return Err(NnError::Shape {
                context: "walk batch".into(),
                expected: vec![steps, 3],
                got: vec![bad.len(), 3],
            });
        }
        let batch = seqs.len();
        let mut x = Vec::with_capacity(steps * batch * 3);
        for t in 0..steps {
            for s in seqs {
                x.extend(s.steps[t].iter().map(|&c| T::from_f64_lossy(c)));
            }
        }
        Ok((x, steps))
    }

    /// Encode a batch of walks into `[B, F]` features: per-step dense+ReLU
    /// twice, three GRU layers from a zero state, the last layer's final
    /// hidden state, then the output dense layer.
    pub fn forward(&self, seqs: &[StepSequence]) -> Result<(Vec<T>, EncoderCache<T>), NnError> {
        let (input, steps) = Self::pack(seqs)?;
        let batch = seqs.len();
        let rows = steps * batch;
        let mut fc1 = self.fc_in[0].forward(&input, rows)?;
        relu_in_place(&mut fc1);
        check_finite(&fc1, "fc_in.0")?;
        let mut fc2 = self.fc_in[1].forward(&fc1, rows)?;
        relu_in_place(&mut fc2);
        check_finite(&fc2, "fc_in.1")?;
        let mut caches: Vec<GruCache<T>> = Vec::with_capacity(3);
        for (l, layer) in self.gru.iter().enumerate() {
            let x = caches.last().map_or(&fc2, |c| &c.hidden);
            let cache = layer.forward(x, steps, batch, &format!("gru.{l}"))?;
            caches.push(cache);
        }
        let last = caches[2].last_hidden();
        let features = self.fc_out.forward(last, batch)?;
        check_finite(&features, "fc_out")?;
        Ok((
            features,
            EncoderCache {
                steps,
                batch,
                input,
                fc1,
                fc2,
                gru: caches,
            },
        ))
    }

    /// Accumulates into `grad`; returns `dL/dinput`, time-major `[L, B, 3]`.
    pub fn backward(
        &self,
        cache: &EncoderCache<T>,
        d_features: &[T],
        grad: &mut EncoderParams<T>,
    ) -> Result<Vec<T>, NnError> {
        let (steps, batch) = (cache.steps, cache.batch);
        let f = self.feature_dim();
        if d_features.len() != batch * f {
            return Err(NnError::Shape {
                context: "encoder output gradient".into(),
                expected: vec![batch, f],
                got: vec![d_features.len()],
            });
        }
        let h3 = self.gru[2].hidden();
        let d_last = self
            .fc_out
            .backward(cache.gru[2].last_hidden(), d_features, batch, &mut grad.fc_out);
        let mut d_hidden = vec![T::zero(); steps * batch * h3];
        d_hidden[(steps - 1) * batch * h3..].copy_from_slice(&d_last);
        for l in (0..3).rev() {
            d_hidden = self.gru[l].backward(&cache.gru[l], &d_hidden, &mut grad.gru[l]);
        }
        let rows = steps * batch;
        relu_backward_in_place(&cache.fc2, &mut d_hidden);
        let mut d1 = self.fc_in[1].backward(&cache.fc1, &d_hidden, rows, &mut grad.fc_in[1]);
        relu_backward_in_place(&cache.fc1, &mut d1);
        Ok(self.fc_in[0].backward(&cache.input, &d1, rows, &mut grad.fc_in[0]))
    }
}

impl<T: Real> ProjectionParams<T> {
    pub fn zeros(shape: &NetworkShape) -> Self {
        let [p1, p2] = shape.projection;
        ProjectionParams {
            hidden: Dense::zeros(shape.feature_dim(), p1),
            output: Dense::zeros(p1, p2),
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: &NetworkShape, rng: &mut R) -> Self {
        let [p1, p2] = shape.projection;
        ProjectionParams {
            hidden: Dense::init(shape.feature_dim(), p1, rng),
            output: Dense::init(p1, p2, rng),
        }
    }

    /// dense → ReLU → dense on `[B, F]` features.
    pub fn forward(&self, features: &[T], batch: usize) -> Result<(Vec<T>, ProjectionCache<T>), NnError> {
        let mut hidden = self.hidden.forward(features, batch)?;
        relu_in_place(&mut hidden);
        let out = self.output.forward(&hidden, batch)?;
        check_finite(&out, "projection")?;
        Ok((
            out,
            ProjectionCache {
                batch,
                input: features.to_vec(),
                hidden,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &ProjectionCache<T>,
        d_out: &[T],
        grad: &mut ProjectionParams<T>,
    ) -> Result<Vec<T>, NnError> {
        let expected = cache.batch * self.output.outputs();
        if d_out.len() != expected {
            return Err(NnError::Shape {
                context: "projection output gradient".into(),
                expected: vec![cache.batch, self.output.outputs()],
                got: vec![d_out.len()],
            });
        }
        let mut dh = self.output.backward(&cache.hidden, d_out, cache.batch, &mut grad.output);
        relu_backward_in_place(&cache.hidden, &mut dh);
        Ok(self.hidden.backward(&cache.input, &dh, cache.batch, &mut grad.hidden))
    }
}

/// Encoder plus projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub shape: NetworkShape,
    pub encoder: EncoderParams<T>,
    pub projection: ProjectionParams<T>,
}

impl<T: Real> Model<T> {
    pub fn zeros(shape: NetworkShape) -> Self {
        Model {
            shape,
            encoder: EncoderParams::zeros(&shape),
            projection: ProjectionParams::zeros(&shape),
        }
    }

    pub fn init(shape: NetworkShape, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[rng::domain::PARAM_INIT]);
        Model {
            shape,
            encoder: EncoderParams::init(&shape, &mut r),
            projection: ProjectionParams::init(&shape, &mut r),
        }
    }

    /// A zeroed parameter set with the same layout, for gradients.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut out = Model::<U>::zeros(self.shape);
        let src = self.tensors();
        for (dst, s) in out.tensors_mut().into_iter().zip(src) {
            *dst = s.cast();
        }
        out
    }
}

fn dense_named<'a, T>(prefix: &str, d: &'a Dense<T>, out: &mut Vec<(String, &'a Tensor<T>)>) {
    out.push((format!("{prefix}.weight"), &d.weight));
    out.push((format!("{prefix}.bias"), &d.bias));
}

fn gru_named<'a, T>(prefix: &str, g: &'a GruLayer<T>, out: &mut Vec<(String, &'a Tensor<T>)>) {
    out.push((format!("{prefix}.w_input"), &g.w_input));
    out.push((format!("{prefix}.w_hidden"), &g.w_hidden));
    out.push((format!("{prefix}.bias"), &g.bias));
}

impl<T: Real> Parameters<T> for EncoderParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        dense_named("fc_in.0", &self.fc_in[0], &mut out);
        dense_named("fc_in.1", &self.fc_in[1], &mut out);
        for (i, g) in self.gru.iter().enumerate() {
            gru_named(&format!("gru.{i}"), g, &mut out);
        }
        dense_named("fc_out", &self.fc_out, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let [f0, f1] = &mut self.fc_in;
        let mut out = vec![&mut f0.weight, &mut f0.bias, &mut f1.weight, &mut f1.bias];
        for g in self.gru.iter_mut() {
            out.push(&mut g.w_input);
            out.push(&mut g.w_hidden);
            out.push(&mut g.bias);
        }
        out.push(&mut self.fc_out.weight);
        out.push(&mut self.fc_out.bias);
        out
    }
}

impl<T: Real> Parameters<T> for ProjectionParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        dense_named("hidden", &self.hidden, &mut out);
        dense_named("output", &self.output, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }
}

impl<T: Real> Parameters<T> for Model<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .encoder
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t))
            .collect();
        out.extend(
            self.projection
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (format!("projection.{n}"), t)),
        );
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.projection.tensors_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(seed: u64, len: usize) -> StepSequence {
        let mut r = rng::stream(seed, &[99]);
        StepSequence {
            steps: (0..len)
                .map(|_| [0; 3].map(|_| r.random_range(-1.0..1.0)))
                .collect(),
        }
    }

    #[test]
    fn zero_network_outputs_its_bias() {
        let shape = NetworkShape::desk();
        let mut enc = EncoderParams::<f64>::zeros(&shape);
        let (out, _) = enc.forward(&[seq(1, 10)]).unwrap();
        assert_eq!(out.len(), 128);
        assert!(out.iter().all(|&v| v == 0.0));
        enc.fc_out.bias.data_mut()[3] = 0.7;
        let (out, _) = enc.forward(&[seq(2, 5)]).unwrap();
        assert_eq!(out[3], 0.7);
        assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 1);

        let proj = ProjectionParams::<f64>::zeros(&shape);
        let (p, _) = proj.forward(&vec![1.0; 128], 1).unwrap();
        assert_eq!(p, vec![0.0; 32]);
    }

    #[test]
    fn shapes_follow_the_preset() {
        let model = Model::<f32>::init(NetworkShape::desk(), 3);
        for len in [2, 7, 30] {
            let (f, _) = model.encoder.forward(&[seq(1, len), seq(2, len)]).unwrap();
            assert_eq!(f.len(), 2 * 128);
            let (p, _) = model.projection.forward(&f, 2).unwrap();
            assert_eq!(p.len(), 2 * 32);
        }
        let paper = NetworkShape::paper();
        assert_eq!(paper.feature_dim(), 2048);
        assert_eq!(paper.embedding_dim(), 256);
        let head = ProjectionParams::<f32>::init(&paper, &mut rng::stream(1, &[]));
        let (p, _) = head.forward(&vec![0.1; 2048], 1).unwrap();
        assert_eq!(p.len(), 256);
        assert!(head.forward(&[0.0; 100], 1).is_err());
    }

    #[test]
    fn different_and_permuted_inputs_give_different_features() {
        let model = Model::<f64>::init(NetworkShape::desk(), 5);
        let a = seq(1, 12);
        let b = seq(2, 12);
        let mut permuted = a.clone();
        permuted.steps.reverse();
        let fa = model.encoder.forward(&[a.clone()]).unwrap().0;
        let fb = model.encoder.forward(&[b]).unwrap().0;
        let fp = model.encoder.forward(&[permuted]).unwrap().0;
        let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>();
        assert!(diff(&fa, &fb) > 1e-6);
        assert!(diff(&fa, &fp) > 1e-6);
        // Deterministic.
        assert_eq!(fa, model.encoder.forward(&[a]).unwrap().0);
    }

    #[test]
    fn batched_forward_matches_single_sequences() {
        let model = Model::<f64>::init(NetworkShape::desk(), 8);
        let seqs = [seq(1, 9), seq(2, 9), seq(3, 9)];
        let (batched, _) = model.encoder.forward(&seqs).unwrap();
        for (i, s) in seqs.iter().enumerate() {
            let (single, _) = model.encoder.forward(std::slice::from_ref(s)).unwrap();
            for k in 0..128 {
                assert!((batched[i * 128 + k] - single[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_positively_homogeneous_before_relu() {
        let shape = NetworkShape::desk();
        let head = ProjectionParams::<f64>::init(&shape, &mut rng::stream(4, &[]));
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.37).sin()).collect();
        let x2: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let (_, c1) = head.forward(&x, 1).unwrap();
        let (_, c2) = head.forward(&x2, 1).unwrap();
        for (a, b) in c1.hidden.iter().zip(&c2.hidden) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let model = Model::<f32>::init(NetworkShape::desk(), 1);
        assert!(model.encoder.forward(&[seq(1, 4), seq(2, 5)]).is_err());
        assert!(model.encoder.forward(&[]).is_err());
    }

    #[test]
    fn parameter_names_are_unique_and_ordered() {
        let model = Model::<f32>::init(NetworkShape::desk(), 1);
        let named = model.named_tensors();
        let mut names: Vec<_> = named.iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(names[0], "encoder.fc_in.0.weight");
        let count = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), count);
        let flat = model.flatten();
        let mut copy = model.zeros_like();
        copy.assign_flat(&flat);
        assert_eq!(copy, model);
    }
}

//! One-vs-rest linear SVMs trained with Pegasos (primal stochastic
//! subgradient descent on the L2-regularized hinge loss).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Regularization strength λ.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-3,
            epochs: 100,
            seed: 0,
        }
    }
}

/// Per-class weights over standardized features. The bias is the last
/// weight, paired with a constant input of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub config: SvmConfig,
    /// Primal objective averaged over classes, after each epoch.
    pub objective_trace: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardized input with the constant bias feature appended.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        out.push(1.0);
        out
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        if x.len() != self.dim() {
            return Err(EvalError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let z = self.standardize(x);
        Ok(self.weights.iter().map(|w| dot(w, &z)).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(w: &[f64], xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / xs.len() as f64
}

/// Train one binary Pegasos SVM per class (sorted by name).
pub fn svm_train(samples: &[(Vec<f64>, String)], config: &SvmConfig) -> Result<SvmModel, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(config.lambda > 0.0) || config.epochs == 0 {
        return Err(EvalError::Config("lambda must be positive and epochs at least 1".into()));
    }
    let mut classes: Vec<String> = samples.iter().map(|s| s.1.clone()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(EvalError::SingleClass);
    }
    let dim = samples[0].0.len();
    if let Some(bad) = samples.iter().find(|s| s.0.len() != dim) {
        return Err(EvalError::Dimension {
            expected: dim,
            got: bad.0.len(),
        });
    }
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|k| samples.iter().map(|s| s.0[k]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|k| {
            let var = samples.iter().map(|s| (s.0[k] - mean[k]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut model = SvmModel {
        classes,
        weights: Vec::new(),
        mean,
        scale,
        config: *config,
        objective_trace: vec![0.0; config.epochs],
    };
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| model.standardize(&s.0)).collect();
    let lambda = config.lambda;
    let radius = 1.0 / lambda.sqrt();
    for class in model.classes.clone() {
        let ys: Vec<f64> = samples.iter().map(|s| if s.1 == class { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; dim + 1];
        let mut t = 0usize;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng::stream(config.seed, &[domain::SVM, epoch as u64]));
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let violated = ys[i] * dot(&w, &xs[i]) < 1.0;
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if violated {
                    for (v, x) in w.iter_mut().zip(&xs[i]) {
                        *v += eta * ys[i] * x;
                    }
                }
                // Optional Pegasos projection onto the ball containing the optimum.
                let norm = dot(&w, &w).sqrt();
                if norm > radius {
                    w.iter_mut().for_each(|v| *v *= radius / norm);
                }
            }
            model.objective_trace[epoch] += objective(&w, &xs, &ys, lambda);
        }
        model.weights.push(w);
    }
    let k = model.classes.len() as f64;
    model.objective_trace.iter_mut().for_each(|o| *o /= k);
    Ok(model)
}

/// Class with the largest decision value; ties go to the lower class index.
pub fn svm_predict<'m>(model: &'m SvmModel, x: &[f64]) -> Result<&'m str, EvalError> {
    let scores = model.decision_values(x)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(&model.classes[best])
}

pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], labels: &[T]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    if predictions.len() != labels.len() {
        return Err(EvalError::Dimension {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p.as_ref() == l.as_ref())
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Class names indexing both axes of the confusion matrix.
    pub classes: Vec<String>,
    /// `confusion_matrix[true][predicted]` counts.
    pub confusion_matrix: Vec<Vec<usize>>,
}

/// Predict every sample and tabulate the results.
pub fn classification_report(model: &SvmModel, samples: &[(Vec<f64>, String)]) -> Result<ClassificationReport, EvalError> {
    let mut classes = model.classes.clone();
    for (_, label) in samples {
        if !classes.contains(label) {
            classes.push(label.clone());
        }
    }
    let mut matrix = vec![vec![0usize; classes.len()]; classes.len()];
    let mut predictions = Vec::with_capacity(samples.len());
    for (x, label) in samples {
        let p = svm_predict(model, x)?;
        let ti = classes.iter().position(|c| c == label).expect("listed above");
        let pi = classes.iter().position(|c| c == p).expect("model class");
        matrix[ti][pi] += 1;
        predictions.push(p);
    }
    let labels: Vec<&str> = samples.iter().map(|s| s.1.as_str()).collect();
    Ok(ClassificationReport {
        accuracy: accuracy(&predictions, &labels)?,
        classes,
        confusion_matrix: matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(seed: u64, n: usize, spread: f64) -> Vec<(Vec<f64>, String)> {
        let mut r = rng::stream(seed, &[]);
        let centers = [(-5.0, 0.0), (5.0, 0.0), (0.0, 8.0)];
        (0..n)
            .map(|i| {
                let (cx, cy) = centers[i % 3];
                (
                    vec![cx + r.random_range(-spread..spread), cy + r.random_range(-spread..spread)],
                    format!("c{}", i % 3),
                )
            })
            .collect()
    }

    #[test]
    fn separable_blobs_are_learned_perfectly() {
        let data = blobs(1, 90, 0.5);
        let model = svm_train(&data, &SvmConfig::default()).unwrap();
        let report = classification_report(&model, &data).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.confusion_matrix.iter().map(|r| r.iter().sum::<usize>()).sum::<usize>(), 90);
        assert_eq!(model.classes, ["c0", "c1", "c2"]);
    }

    #[test]
    fn shuffled_labels_do_not_generalize() {
        let mut r = rng::stream(5, &[]);
        let mut total = 0.0;
        let trials = 10;
        for t in 0..trials {
            let mut train = blobs(10 + t, 60, 0.5);
            let mut labels: Vec<String> = train.iter().map(|s| s.1.clone()).collect();
            labels.shuffle(&mut r);
            train.iter_mut().zip(labels).for_each(|(s, l)| s.1 = l);
            let model = svm_train(&train, &SvmConfig::default()).unwrap();
            let mut held = blobs(100 + t, 60, 0.5);
            let mut hl: Vec<String> = held.iter().map(|s| s.1.clone()).collect();
            hl.shuffle(&mut r);
            held.iter_mut().zip(hl).for_each(|(s, l)| s.1 = l);
            total += classification_report(&model, &held).unwrap().accuracy;
        }
        let mean = total / trials as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.12, "{mean}");
    }

    #[test]
    fn objective_trends_down() {
        let data = blobs(2, 120, 4.0);
        let model = svm_train(&data, &SvmConfig { epochs: 40, ..Default::default() }).unwrap();
        let tr = &model.objective_trace;
        let half = tr.len() / 2;
        let first: f64 = tr[..half].iter().sum::<f64>() / half as f64;
        let second: f64 = tr[half..].iter().sum::<f64>() / (tr.len() - half) as f64;
        assert!(second <= first, "{first} -> {second}");
        assert!(tr.last().unwrap() <= &tr[0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let data = blobs(3, 60, 3.0);
        let a = svm_train(&data, &SvmConfig::default()).unwrap();
        assert_eq!(a, svm_train(&data, &SvmConfig::default()).unwrap());
    }

    #[test]
    fn zero_weights_predict_the_first_class() {
        let model = SvmModel {
            classes: vec!["a".into(), "b".into()],
            weights: vec![vec![0.0; 3]; 2],
            mean: vec![0.0; 2],
            scale: vec![1.0; 2],
            config: SvmConfig::default(),
            objective_trace: vec![],
        };
        assert_eq!(svm_predict(&model, &[3.0, -1.0]).unwrap(), "a");
        assert!(svm_predict(&model, &[1.0]).is_err());
    }

    #[test]
    fn positive_margin_of_one_class_wins() {
        let model = SvmModel {
            classes: vec!["a".into(), "b".into(), "c".into()],
            weights: vec![vec![-1.0, 0.0, -1.0], vec![1.0, 0.0, -1.0], vec![0.0, -1.0, -1.0]],
            mean: vec![0.0; 2],
            scale: vec![1.0; 2],
            config: SvmConfig::default(),
            objective_trace: vec![],
        };
        assert_eq!(svm_predict(&model, &[3.0, 0.0]).unwrap(), "b");
        // Prediction equals argmax over weights applied to the standardized input.
        let x = [0.3, -2.0];
        let z = model.standardize(&x);
        let manual = (0..3)
            .max_by(|&a, &b| dot(&model.weights[a], &z).total_cmp(&dot(&model.weights[b], &z)))
            .unwrap();
        assert_eq!(svm_predict(&model, &x).unwrap(), model.classes[manual]);
    }

    #[test]
    fn input_errors() {
        let one = vec![(vec![1.0], "a".to_string()), (vec![2.0], "a".to_string())];
        assert_eq!(svm_train(&one, &SvmConfig::default()), Err(EvalError::SingleClass));
        assert_eq!(accuracy::<&str, &str>(&[], &[]), Err(EvalError::Empty));
        assert_eq!(accuracy(&["a", "b", "c", "d"], &["a", "b", "c", "x"]).unwrap(), 0.75);
        assert_eq!(accuracy(&["a"], &["a"]).unwrap(), 1.0);
        assert_eq!(accuracy(&["a"], &["b"]).unwrap(), 0.0);
    }
}

//! Central finite-difference gradient checking.

use rand::seq::index::sample;

use crate::rng;

/// Relative errors are computed against `max(|analytic|, |numeric|, FLOOR)`
/// so that coordinates with a vanishing gradient are compared on an
/// absolute scale instead of amplifying round-off. For an O(1) loss the
/// central difference at ε = 1e-5 carries round-off near 1e-10, which
/// sets the floor.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordSelection {
    All,
    /// A seeded random subset of `count` coordinates (all, if fewer exist).
    Random { count: usize, seed: u64 },
}

impl CoordSelection {
    pub const MIN_RANDOM: usize = 200;

    pub fn random(seed: u64) -> Self {
        CoordSelection::Random {
            count: Self::MIN_RANDOM,
            seed,
        }
    }

    pub fn indices(&self, total: usize) -> Vec<usize> {
        match *self {
            CoordSelection::Random { count, seed } if count < total => {
                let mut r = rng::stream(seed, &[]);
                let mut idx = sample(&mut r, total, count).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..total).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compare `analytic` against `(f(θ+ε) − f(θ−ε)) / 2ε` on the selected
/// coordinates and report the worst relative error.
pub fn grad_check<F>(
    f: F,
    theta: &[f64],
    analytic: &[f64],
    epsilon: f64,
    coords: CoordSelection,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    grad_check_at(f, theta, analytic, epsilon, &coords.indices(theta.len()))
}

/// [`grad_check`] on an explicit list of coordinates.
pub fn grad_check_at<F>(mut f: F, theta: &[f64], analytic: &[f64], epsilon: f64, indices: &[usize]) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "gradient length mismatch");
    let mut probe = theta.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let plus = f(&probe);
        probe[i] = orig - epsilon;
        let minus = f(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    fn dense_case(seed: u64) -> (Dense<f64>, Vec<f64>, Vec<f64>) {
        let mut r = rng::stream(seed, &[]);
        let layer = Dense::<f64>::init(5, 4, &mut r);
        let x: Vec<f64> = (0..3 * 5).map(|i| (i as f64 * 0.71).cos()).collect();
        let c: Vec<f64> = (0..3 * 4).map(|i| (i as f64 * 1.3).sin()).collect();
        (layer, x, c)
    }

    fn dense_loss(theta: &[f64], x: &[f64], c: &[f64]) -> f64 {
        let mut layer = Dense::<f64>::zeros(5, 4);
        layer.weight.data_mut().copy_from_slice(&theta[..20]);
        layer.bias.data_mut().copy_from_slice(&theta[20..]);
        let y = layer.forward(x, 3).unwrap();
        y.iter().zip(c).map(|(a, b)| a * b).sum()
    }

    fn dense_analytic(layer: &Dense<f64>, x: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = Dense::zeros(5, 4);
        layer.backward(x, c, 3, &mut g);
        let theta = [layer.weight.data(), layer.bias.data()].concat();
        let grad = [g.weight.data(), g.bias.data()].concat();
        (theta, grad)
    }

    #[test]
    fn dense_layer_passes() {
        let (layer, x, c) = dense_case(1);
        let (theta, grad) = dense_analytic(&layer, &x, &c);
        let report = grad_check(|t| dense_loss(t, &x, &c), &theta, &grad, 1e-5, CoordSelection::All);
        assert_eq!(report.checked, 24);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (layer, x, c) = dense_case(2);
        let (theta, mut grad) = dense_analytic(&layer, &x, &c);
        let i = (0..20).max_by(|&a, &b| grad[a].abs().total_cmp(&grad[b].abs())).unwrap();
        grad[i] = -grad[i];
        let report = grad_check(|t| dense_loss(t, &x, &c), &theta, &grad, 1e-5, CoordSelection::All);
        assert!(report.max_rel_error > 1e-2, "{report:?}");
        assert_eq!(report.worst_index, i);
    }

    #[test]
    fn random_selection_covers_at_least_two_hundred() {
        let idx = CoordSelection::random(3).indices(1000);
        assert_eq!(idx.len(), 200);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(CoordSelection::random(3).indices(50).len(), 50);
    }
}

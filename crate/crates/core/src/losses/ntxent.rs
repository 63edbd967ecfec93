use super::{l2, normalize_backward, EmbeddingBatch, LossError};

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    if a.len() != b.len() {
        return Err(LossError::DimMismatch(a.len(), b.len()));
    }
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 {
        return Err(LossError::ZeroNorm(0));
    }
    if nb == 0.0 {
        return Err(LossError::ZeroNorm(1));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Normalised temperature-scaled cross entropy.
///
/// Every one of the `2N` rows acts as an anchor; its partner in the pair is
/// the positive and the other `2N - 2` rows are negatives. The anchor itself
/// is excluded from the softmax denominator. The loss is the mean over
/// anchors; gradients are returned for the raw rows.
pub fn nt_xent(batch: &EmbeddingBatch, temperature: f64) -> Result<(f64, Vec<f64>), LossError> {
    let rows = batch.rows();
    let dim = batch.dim();
    if rows == 0 {
        return Ok((0.0, Vec::new()));
    }
    let unit = batch.normalized()?;
    let inv_t = 1.0 / temperature;
    let mut sim = vec![0.0; rows * rows];
    for i in 0..rows {
        for j in i..rows {
            let s: f64 = unit.row(i).iter().zip(unit.row(j)).map(|(a, b)| a * b).sum::<f64>() * inv_t;
            sim[i * rows + j] = s;
            sim[j * rows + i] = s;
        }
    }
    let scale = 1.0 / rows as f64;
    let mut loss = 0.0;
    // coeff[i][k] = dL/dsim[i][k] from anchor i.
    let mut coeff = vec![0.0; rows * rows];
    for i in 0..rows {
        let positive = i ^ 1;
        let row = &sim[i * rows..(i + 1) * rows];
        let max = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &s)| (s - max).exp())
            .sum();
        let log_denom = max + denom.ln();
        loss += log_denom - row[positive];
        for k in 0..rows {
            if k == i {
                continue;
            }
            let p = (row[k] - max).exp() / denom;
            let target = if k == positive { 1.0 } else { 0.0 };
            coeff[i * rows + k] = scale * (p - target);
        }
    }
    loss *= scale;

    // sim is symmetric, so each entry feeds both rows it touches.
    let mut d_unit = vec![0.0; rows * dim];
    for i in 0..rows {
        for k in 0..rows {
            let c = (coeff[i * rows + k] + coeff[k * rows + i]) * inv_t;
            if c == 0.0 {
                continue;
            }
            let uk = unit.row(k);
            let di = &mut d_unit[i * dim..(i + 1) * dim];
            for (d, u) in di.iter_mut().zip(uk) {
                *d += c * u;
            }
        }
    }
    Ok((loss, normalize_backward(batch, &unit, &d_unit)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, CoordSelection};
    use crate::rng;
    use rand::Rng;

    /// Direct transcription of the formula, written independently of the
    /// implementation above.
    fn oracle(rows: &[Vec<f64>], tau: f64) -> f64 {
        let n2 = rows.len();
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut total = 0.0;
        for i in 0..n2 {
            let pos = if i % 2 == 0 { i + 1 } else { i - 1 };
            let num = (cos(&rows[i], &rows[pos]) / tau).exp();
            let den: f64 = (0..n2).filter(|&j| j != i).map(|j| (cos(&rows[i], &rows[j]) / tau).exp()).sum();
            total += -(num / den).ln();
        }
        total / n2 as f64
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.70710678).abs() < 1e-8);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(LossError::ZeroNorm(0)));
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let b = EmbeddingBatch::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let (loss, grads) = nt_xent(&b, 0.5).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn orthogonal_pairs_value() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let b = EmbeddingBatch::from_rows(&rows).unwrap();
        let (loss, _) = nt_xent(&b, 1.0).unwrap();
        let expected = oracle(&rows, 1.0);
        // -log(e / (e + 2))
        assert!((expected - (1.0 + 2.0 / std::f64::consts::E).ln()).abs() < 1e-15);
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.55144).abs() < 1e-5);
    }

    #[test]
    fn matches_oracle_on_random_batches() {
        let mut r = rng::stream(5, &[]);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let tau = r.random_range(0.1..2.0);
            let (loss, _) = nt_xent(&EmbeddingBatch::from_rows(&rows).unwrap(), tau).unwrap();
            assert!((loss - oracle(&rows, tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::stream(6, &[]);
        let theta: Vec<f64> = (0..8 * 8).map(|_| r.random_range(-1.0..1.0)).collect();
        let f = |t: &[f64]| nt_xent(&EmbeddingBatch::new(8, 8, t.to_vec()).unwrap(), 0.5).unwrap().0;
        let (_, grads) = nt_xent(&EmbeddingBatch::new(8, 8, theta.clone()).unwrap(), 0.5).unwrap();
        let report = grad_check(f, &theta, &grads, 1e-6, CoordSelection::All);
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn invariant_to_positive_row_scaling() {
        let mut r = rng::stream(7, &[]);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let base = nt_xent(&EmbeddingBatch::from_rows(&rows).unwrap(), 0.5).unwrap().0;
        for (row, lambda) in [(0, 4.0), (3, 0.125), (5, 3.7)] {
            let mut scaled = rows.clone();
            scaled[row].iter_mut().for_each(|v| *v *= lambda);
            let l = nt_xent(&EmbeddingBatch::from_rows(&scaled).unwrap(), 0.5).unwrap().0;
            if lambda == 4.0 || lambda == 0.125 {
                assert_eq!(l, base);
            } else {
                assert!((l - base).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closer_positives_never_increase_loss() {
        // Pair 0 lives in the (e1, e2) plane, pair 1 on e3/e4, so only the
        // positive similarity of pair 0 changes with the angle.
        let mut prev = f64::INFINITY;
        for step in (0..=20).rev() {
            let angle = step as f64 * std::f64::consts::FRAC_PI_2 / 20.0;
            let rows = vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![angle.cos(), angle.sin(), 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ];
            let l = nt_xent(&EmbeddingBatch::from_rows(&rows).unwrap(), 0.5).unwrap().0;
            assert!(l <= prev + 1e-15);
            prev = l;
        }
    }

    #[test]
    fn zero_row_is_rejected() {
        let b = EmbeddingBatch::new(4, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(nt_xent(&b, 0.5), Err(LossError::ZeroNorm(1)));
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::mesh::{normalize_mesh, Mesh};
use crate::nn::Model;
use crate::rng::{self, domain};
use crate::walker::{random_walk, walk_to_sequence, Surface, WalkConfig};
use crate::Real;

/// A pre-projection encoder feature for one source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub source_id: String,
    pub label: Option<String>,
    #[serde(rename = "vector")]
    pub values: Vec<f64>,
}

/// Indices (ascending) of the `ceil(n/2)` rows closest to the mean row.
/// Equal distances keep the lower index.
pub fn select_closest_half(features: &[Vec<f64>]) -> Vec<usize> {
    let n = features.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = features[0].len();
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let dist: Vec<f64> = features
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(n.div_ceil(2));
    order.sort_unstable();
    order
}

/// Average of the selected rows.
pub fn average_rows(features: &[Vec<f64>], keep: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; features[keep[0]].len()];
    for &i in keep {
        for (o, v) in out.iter_mut().zip(&features[i]) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= keep.len() as f64);
    out
}

/// Stable 64-bit key for a source id, so a model's inference walks do not
/// depend on where it sits in a dataset.
pub fn source_key(source_id: &str) -> u64 {
    let digest = Sha256::digest(source_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Encode `n_walks` walks on `mesh` (normalized first) and average the
/// half of the features closest to their mean.
pub fn embed_mesh<T: Real>(
    model: &Model<T>,
    mesh: &Mesh,
    n_walks: usize,
    walk: &WalkConfig,
    seed: u64,
) -> Result<Vec<f64>, PipelineError> {
    if n_walks < 2 {
        return Err(PipelineError::Config(format!("need at least 2 inference walks, got {n_walks}")));
    }
    let surface = Surface::from_mesh(&normalize_mesh(mesh)?);
    let key = source_key(&mesh.source_id);
    let seqs = (0..n_walks as u64)
        .map(|w| {
            let mut r = rng::stream(seed, &[domain::EMBED, key, w]);
            let walk = random_walk(&surface, walk, &mut r)?;
            walk_to_sequence(&surface.vertices, &walk)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (flat, _) = model.encoder.forward(&seqs)?;
    let dim = model.shape.feature_dim();
    let features: Vec<Vec<f64>> = flat
        .chunks_exact(dim)
        .map(|row| row.iter().map(|v| v.as_f64()).collect())
        .collect();
    Ok(average_rows(&features, &select_closest_half(&features)))
}

/// One feature per distinct source id, ordered by id, each computed on the
/// augmentation with the most faces.
pub fn embed_dataset<T: Real>(
    model: &Model<T>,
    meshes: &[Mesh],
    n_walks: usize,
    walk: &WalkConfig,
    seed: u64,
) -> Result<Vec<FeatureVector>, PipelineError> {
    let mut largest: BTreeMap<&str, &Mesh> = BTreeMap::new();
    for m in meshes {
        let slot = largest.entry(&m.source_id).or_insert(m);
        if m.face_count() > slot.face_count() {
            *slot = m;
        }
    }
    let picked: Vec<&Mesh> = largest.into_values().collect();
    let one = |m: &&Mesh| -> Result<FeatureVector, PipelineError> {
        Ok(FeatureVector {
            source_id: m.source_id.clone(),
            label: m.label.clone(),
            values: embed_mesh(model, m, n_walks, walk, seed)?,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        picked.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    picked.iter().map(one).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_synthetic, ShapeClass, ShapeParams};
    use crate::nn::NetworkShape;
    use crate::resample::subdivide;
    use proptest::prelude::*;

    #[test]
    fn identical_features_average_to_themselves() {
        let f = vec![vec![0.25, -1.0, 3.0]; 7];
        let keep = select_closest_half(&f);
        assert_eq!(keep, vec![0, 1, 2, 3]);
        assert_eq!(average_rows(&f, &keep), f[0]);
    }

    #[test]
    fn two_walks_keep_the_first() {
        let f = vec![vec![1.0, 2.0], vec![3.0, -4.0]];
        assert_eq!(select_closest_half(&f), vec![0]);
    }

    #[test]
    fn outlier_is_excluded() {
        let mut f: Vec<Vec<f64>> = (0..31).map(|i| vec![1.0 + 0.001 * i as f64, 2.0]).collect();
        f.insert(17, vec![50.0, -50.0]);
        let keep = select_closest_half(&f);
        assert_eq!(keep.len(), 16);
        assert!(!keep.contains(&17));
    }

    proptest! {
        #[test]
        fn selection_matches_a_sort_oracle(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..40)) {
            let n = rows.len();
            let mean: Vec<f64> = (0..3).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
            let mut keyed: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum(), i))
                .collect();
            keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut expected: Vec<usize> = keyed[..(n + 1) / 2].iter().map(|k| k.1).collect();
            expected.sort();
            prop_assert_eq!(select_closest_half(&rows), expected);
        }
    }

    fn dataset() -> Vec<Mesh> {
        let mut out = Vec::new();
        for (i, class) in [ShapeClass::Sphere, ShapeClass::Box, ShapeClass::Torus].into_iter().enumerate() {
            let m = gen_synthetic(class, &ShapeParams::default(), i as u64).unwrap();
            out.push(subdivide(&m));
            out.push(m);
        }
        out
    }

    #[test]
    fn one_feature_per_model_deterministically() {
        let model = Model::<f32>::init(NetworkShape::desk(), 2);
        let walk = WalkConfig {
            length: 16,
            jump_prob: 0.05,
        };
        let meshes = dataset();
        let a = embed_dataset(&model, &meshes, 8, &walk, 5).unwrap();
        assert_eq!(a.len(), 3);
        let mut ids: Vec<&str> = meshes.iter().map(|m| m.source_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(a.iter().map(|f| f.source_id.as_str()).collect::<Vec<_>>(), ids);
        assert!(a.iter().all(|f| f.values.len() == 128 && f.label.is_some()));
        assert_eq!(a, embed_dataset(&model, &meshes, 8, &walk, 5).unwrap());
        assert!(embed_mesh(&model, &meshes[0], 1, &walk, 5).is_err());
    }
}

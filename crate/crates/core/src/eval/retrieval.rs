use std::collections::{BTreeMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{sq_dist, EvalError};
use crate::pipeline::FeatureVector;

/// Features searchable by Euclidean distance.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    entries: Vec<FeatureVector>,
}

impl RetrievalIndex {
    pub fn new(entries: Vec<FeatureVector>) -> Result<Self, EvalError> {
        let dim = entries.first().map_or(0, |e| e.values.len());
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.source_id.as_str()) {
                return Err(EvalError::DuplicateId(e.source_id.clone()));
            }
            if e.values.len() != dim {
                return Err(EvalError::Dimension {
                    expected: dim,
                    got: e.values.len(),
                });
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::NonFinite(e.source_id.clone()));
            }
        }
        Ok(RetrievalIndex { entries })
    }

    pub fn entries(&self) -> &[FeatureVector] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn position(&self, id: &str) -> Result<usize, EvalError> {
        self.entries
            .iter()
            .position(|e| e.source_id == id)
            .ok_or_else(|| EvalError::UnknownQuery(id.to_string()))
    }

    /// Every other entry, nearest first; equal distances ordered by id.
    fn ranking(&self, q: usize) -> Vec<usize> {
        let query = &self.entries[q].values;
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != q)
            .map(|(i, e)| (sq_dist(query, &e.values), i))
            .collect();
        scored.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.entries[a.1].source_id.cmp(&self.entries[b.1].source_id))
        });
        scored.into_iter().map(|(_, i)| i).collect()
    }

    /// The `k` nearest other entries (all of them if `k` is larger).
    pub fn retrieve(&self, query_id: &str, k: usize) -> Result<Vec<String>, EvalError> {
        let q = self.position(query_id)?;
        Ok(self
            .ranking(q)
            .into_iter()
            .take(k)
            .map(|i| self.entries[i].source_id.clone())
            .collect())
    }
}

/// `(1/R) Σ_k Precision(k) · rel(k)` over the full retrieved ranking.
pub fn average_precision(relevance: &[bool], total_relevant: usize) -> Result<f64, EvalError> {
    if total_relevant == 0 {
        return Err(EvalError::NoRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / total_relevant as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    /// Mean AP of the queries belonging to each class.
    pub per_class_ap: BTreeMap<String, f64>,
    pub queries: usize,
    /// Queries without a label or without any other member of their class.
    pub skipped: Vec<String>,
}

/// mAP of `queries` ranked against the whole index (query excluded);
/// relevant means same label.
pub fn mean_average_precision(index: &RetrievalIndex, queries: &[&str]) -> Result<MapReport, EvalError> {
    let mut per_class: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut skipped = Vec::new();
    for &id in queries {
        let q = index.position(id)?;
        let Some(label) = index.entries[q].label.as_deref() else {
            warn!("query {id} has no label; skipped");
            skipped.push(id.to_string());
            continue;
        };
        let ranking = index.ranking(q);
        let relevance: Vec<bool> = ranking
            .iter()
            .map(|&i| index.entries[i].label.as_deref() == Some(label))
            .collect();
        let total = relevance.iter().filter(|&&r| r).count();
        if total == 0 {
            warn!("query {id} is the only member of class {label}; skipped");
            skipped.push(id.to_string());
            continue;
        }
        let ap = average_precision(&relevance, total)?;
        let slot = per_class.entry(label.to_string()).or_insert((0.0, 0));
        slot.0 += ap;
        slot.1 += 1;
    }
    let count: usize = per_class.values().map(|v| v.1).sum();
    if count == 0 {
        return Err(EvalError::NoQueries);
    }
    let total: f64 = per_class.values().map(|v| v.0).sum();
    Ok(MapReport {
        map: total / count as f64,
        per_class_ap: per_class
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
        queries: count,
        skipped,
    })
}

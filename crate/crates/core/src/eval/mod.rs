//! Evaluation of learned features: retrieval mAP, a linear SVM classifier,
//! and CSV export for external plotting.

mod retrieval;
mod svm;

pub use retrieval::{average_precision, mean_average_precision, MapReport, RetrievalIndex};
pub use svm::{
    accuracy, classification_report, svm_predict, svm_train, ClassificationReport, SvmConfig, SvmModel,
};

use thiserror::Error;

use crate::pipeline::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("source id {0} appears twice in the index")]
    DuplicateId(String),
    #[error("feature dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("feature for {0} is not finite")]
    NonFinite(String),
    #[error("query {0} is not in the index")]
    UnknownQuery(String),
    #[error("average precision needs at least one relevant item")]
    NoRelevant,
    #[error("no query has a relevant item in the index")]
    NoQueries,
    #[error("classifier needs at least two classes")]
    SingleClass,
    #[error("empty input")]
    Empty,
    #[error("{0}")]
    Config(String),
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Features as CSV: `source_id,label,f0,f1,...`. Missing labels are empty.
pub fn embeddings_csv(features: &[FeatureVector]) -> String {
    let dim = features.first().map_or(0, |f| f.values.len());
    let mut out = String::from("source_id,label");
    for k in 0..dim {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for f in features {
        out.push_str(&csv_field(&f.source_id));
        out.push(',');
        out.push_str(&csv_field(f.label.as_deref().unwrap_or("")));
        for v in &f.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `(features, label)` pairs for every labelled vector.
pub fn labelled(features: &[FeatureVector]) -> Vec<(Vec<f64>, String)> {
    features
        .iter()
        .filter_map(|f| f.label.clone().map(|l| (f.values.clone(), l)))
        .collect()
}

//! Evaluation: `retrieve` and `svm`.

use std::path::Path;

use log::warn;
use meshwalk::eval::{classification_report, labelled, mean_average_precision, svm_train, RetrievalIndex, SvmConfig};
use meshwalk::manifest::{split_per_class, ManifestRecord, Split};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files::{emit, read_embeddings, to_json, EmbeddingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Queries {
    /// Test-split entries when the file has splits, otherwise every entry.
    Auto,
    All,
    Test,
}

pub fn retrieve(embeddings: &Path, queries: Queries, out: Option<&Path>) -> CliResult<()> {
    let records = read_embeddings(embeddings)?;
    let has_splits = records.iter().any(|r| r.split.is_some());
    let test_only = match queries {
        Queries::All => false,
        Queries::Test if !has_splits => {
            return Err(CliError::Data("--queries test needs embeddings with a split field".into()))
        }
        Queries::Test => true,
        Queries::Auto => has_splits,
    };
    let ids: Vec<&str> = records
        .iter()
        .filter(|r| !test_only || r.split == Some(Split::Test))
        .map(|r| r.source_id.as_str())
        .collect();
    let index = RetrievalIndex::new(records.iter().map(EmbeddingRecord::feature).collect())?;
    let report = mean_average_precision(&index, &ids)?;
    emit(out, &to_json(&report))?;
    if out.is_some() {
        println!("map {:.4} over {} queries", report.map, report.queries);
    }
    Ok(())
}

/// Nearest neighbours of one model, nearest first.
pub fn neighbours(embeddings: &Path, query: &str, k: usize) -> CliResult<()> {
    #[derive(Serialize)]
    struct Hit<'a> {
        rank: usize,
        source_id: &'a str,
        label: Option<&'a str>,
    }
    let records = read_embeddings(embeddings)?;
    let index = RetrievalIndex::new(records.iter().map(EmbeddingRecord::feature).collect())?;
    for (rank, id) in index.retrieve(query, k)?.iter().enumerate() {
        let label = records.iter().find(|r| &r.source_id == id).and_then(|r| r.label.as_deref());
        let hit = Hit { rank: rank + 1, source_id: id, label };
        println!("{}", serde_json::to_string(&hit).expect("hit serializes"));
    }
    Ok(())
}

pub fn svm(embeddings: &Path, config: &SvmConfig, split_seed: u64, out: Option<&Path>) -> CliResult<()> {
    let mut records = read_embeddings(embeddings)?;
    if records.iter().any(|r| r.label.is_none()) {
        warn!("ignoring embeddings without a label");
        records.retain(|r| r.label.is_some());
    }
    if !records.iter().any(|r| r.split == Some(Split::Test)) {
        warn!("no test split in {}; drawing an 80/20 split per class", embeddings.display());
        assign_splits(&mut records, split_seed);
    }
    let of_split = |test: bool| -> Vec<_> {
        records
            .iter()
            .filter(|r| (r.split == Some(Split::Test)) == test)
            .map(EmbeddingRecord::feature)
            .collect()
    };
    let (train, test) = (of_split(false), of_split(true));
    if test.is_empty() {
        return Err(CliError::Data("no test samples to evaluate".into()));
    }
    let model = svm_train(&labelled(&train), config)?;
    let report = classification_report(&model, &labelled(&test))?;
    emit(out, &to_json(&report))?;
    if out.is_some() {
        println!("accuracy {:.4} on {} test samples", report.accuracy, test.len());
    }
    Ok(())
}

fn assign_splits(records: &mut [EmbeddingRecord], seed: u64) {
    let mut rows: Vec<ManifestRecord> = records
        .iter()
        .map(|r| ManifestRecord {
            path: String::new(),
            source_id: r.source_id.clone(),
            class: r.label.clone(),
            seed: None,
            face_count: None,
            split: None,
        })
        .collect();
    split_per_class(&mut rows, 0.2, seed);
    for (r, row) in records.iter_mut().zip(rows) {
        r.split = row.split;
    }
}

//! Accuracy runs over a dataset of `(frame manifest, question, gold answer)`
//! items.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiview::{canonicalize_answer, match_option};
use crate::types::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetItem {
    pub id: String,
    /// Frame manifest, relative to the dataset file.
    pub manifest: PathBuf,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub answer: String,
}

impl DatasetItem {
    pub fn query(&self) -> Query {
        Query {
            id: self.id.clone(),
            text: self.question.clone(),
            options: self.options.clone(),
        }
    }
}

/// Parses dataset JSON Lines, resolving manifests against `base_dir`.
pub fn parse_dataset(text: &str, base_dir: Option<&Path>) -> Result<Vec<DatasetItem>> {
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut item: DatasetItem = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("dataset line {}: {e}", lineno + 1)))?;
        if item.answer.trim().is_empty() {
            return Err(Error::Data(format!("item `{}` has no gold answer", item.id)));
        }
        if let Some(dir) = base_dir {
            if item.manifest.is_relative() {
                item.manifest = dir.join(&item.manifest);
            }
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(items)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetItem>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text, path.parent())
}

/// Compares a prediction with the gold answer after canonicalization;
/// option text in either one is mapped to its letter.
pub fn is_correct(predicted: &str, gold: &str, query: &Query) -> bool {
    let p = match_option(&canonicalize_answer(predicted), query);
    let g = match_option(&canonicalize_answer(gold), query);
    p == g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_items: usize,
    pub n_correct: usize,
    pub n_failed: usize,
    pub accuracy: f64,
    /// Estimated TFLOPs per stage summed over the items that ran.
    pub cost_totals: BTreeMap<String, f64>,
    pub items: Vec<ItemResult>,
}

impl EvalSummary {
    pub fn from_items(items: Vec<ItemResult>, cost_totals: BTreeMap<String, f64>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_correct = items.iter().filter(|i| i.correct).count();
        let n_failed = items.iter().filter(|i| i.error.is_some()).count();
        Ok(Self {
            n_items: items.len(),
            n_correct,
            n_failed,
            accuracy: n_correct as f64 / items.len() as f64,
            cost_totals,
            items,
        })
    }
}

#[cfg(feature = "engine")]
pub use engine::run_eval;

#[cfg(feature = "engine")]
mod engine {
    use super::*;
    use crate::backends::Backends;
    use crate::config::PipelineConfig;
    use crate::costmodel::{as_map, Baseline, ProfileSet};
    use crate::manifest::load_manifest;
    use crate::pipeline::{run_pipeline, RunReport};
    use futures::StreamExt;

    async fn run_item(
        backends: &Backends,
        item: &DatasetItem,
        cfg: &PipelineConfig,
        profiles: &ProfileSet,
        baseline: &Baseline,
    ) -> Result<RunReport> {
        let frames = load_manifest(&item.manifest)?;
        run_pipeline(backends, frames, &item.query(), cfg, profiles, baseline).await
    }

    /// Runs every item with up to `parallelism` items in flight. Failed items
    /// count as incorrect. Configuration errors abort the whole run.
    pub async fn run_eval(
        backends: &Backends,
        items: &[DatasetItem],
        cfg: &PipelineConfig,
        profiles: &ProfileSet,
        baseline: &Baseline,
        parallelism: usize,
    ) -> Result<EvalSummary> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut outcomes: Vec<(usize, Result<RunReport>)> =
            futures::stream::iter(items.iter().enumerate())
                .map(|(i, item)| async move {
                    (i, run_item(backends, item, cfg, profiles, baseline).await)
                })
                .buffer_unordered(parallelism.max(1))
                .collect()
                .await;
        outcomes.sort_by_key(|(i, _)| *i);

        let mut totals: BTreeMap<String, f64> = BTreeMap::new();
        let mut results = Vec::with_capacity(items.len());
        for ((_, outcome), item) in outcomes.into_iter().zip(items) {
            let query = item.query();
            let (predicted, error) = match outcome {
                Err(e) if e.class() == crate::error::ErrorClass::Config => return Err(e),
                Err(e) => (None, Some(format!("{}: {e}", e.kind()))),
                Ok(report) => {
                    if let Some(cost) = &report.cost {
                        for (k, v) in as_map(cost) {
                            *totals.entry(k.to_string()).or_default() += v;
                        }
                    }
                    match (&report.qa, &report.error) {
                        (Some(qa), _) => (Some(qa.final_answer.clone()), None),
                        (None, Some(err)) => (None, Some(format!("{}: {}", err.kind, err.message))),
                        (None, None) => (None, Some("no answer".to_string())),
                    }
                }
            };
            if let Some(e) = &error {
                log::warn!("item {}: {e}", item.id);
            }
            let correct = predicted
                .as_deref()
                .is_some_and(|p| is_correct(p, &item.answer, &query));
            results.push(ItemResult {
                id: item.id.clone(),
                gold: item.answer.clone(),
                predicted,
                correct,
                error,
            });
        }
        EvalSummary::from_items(results, totals)
    }
}

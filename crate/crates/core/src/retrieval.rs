//! Stage 2b: group scored frames by the similarity of their answer-token
//! distributions and sample the final frame budget from each group.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backends::TokenDistribution;
use crate::config::{PipelineConfig, RetrievalFeature, ScoreStrategy};
use crate::error::{Error, Result};
use crate::grouping::{grouped_sample, top_k, Dissimilarity, ScoreVector, Stage};
use crate::score::relevance_score;
use crate::types::FrameRecord;

/// `(p_yes, p_no)` renormalized to sum 1, or the zero vector when both are 0.
pub fn yes_no_feature(d: &TokenDistribution) -> Vec<f64> {
    let s = d.p_yes + d.p_no;
    if s > 0.0 {
        vec![d.p_yes / s, d.p_no / s]
    } else {
        vec![0.0, 0.0]
    }
}

/// Probability vectors over the sorted union of all returned top tokens.
pub fn top_token_features(dists: &[TokenDistribution]) -> Vec<Vec<f64>> {
    let vocab: Vec<&str> = dists
        .iter()
        .flat_map(|d| d.top_tokens.iter().flatten().map(|(t, _)| t.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    dists
        .iter()
        .map(|d| {
            let mut v = vec![0.0; vocab.len()];
            for (t, p) in d.top_tokens.iter().flatten() {
                if let Ok(k) = vocab.binary_search(&t.as_str()) {
                    v[k] += p;
                }
            }
            v
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swap {
    pub added: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub strategy: ScoreStrategy,
    pub feature: RetrievalFeature,
    pub frame_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub boundaries: Vec<usize>,
    pub budgets: Vec<usize>,
    /// Candidate indices retrieved by grouped sampling, ascending.
    pub selected: Vec<usize>,
    /// Candidate indices plain Top-K would have taken, ascending.
    pub top_k: Vec<usize>,
    /// Set when the highest-scored frame had to be swapped in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_score_swap: Option<Swap>,
}

/// Retrieves `min(m_retrieve, |frames|)` frames in temporal order.
///
/// The globally highest-scored frame is always kept: when sampling missed
/// it, it replaces the lowest-scored pick of its own group, or the lowest
/// pick overall if its group had no budget.
pub fn retrieve(
    frames: &[FrameRecord],
    dists: &[TokenDistribution],
    cfg: &PipelineConfig,
) -> Result<(Vec<FrameRecord>, RetrievalTrace)> {
    let n = frames.len();
    if n == 0 || n != dists.len() {
        return Err(Error::Precondition(format!(
            "{n} frames with {} distributions",
            dists.len()
        )));
    }
    let scores: Vec<f64> = dists
        .iter()
        .map(|d| relevance_score(d, cfg.score_strategy).0)
        .collect();
    let (features, metric) = match cfg.retrieval_feature {
        RetrievalFeature::YesNo => (
            dists.iter().map(yes_no_feature).collect::<Vec<_>>(),
            Dissimilarity::L1,
        ),
        RetrievalFeature::TopTokens => (top_token_features(dists), Dissimilarity::Cosine),
    };
    let m = cfg.m_retrieve.min(n);
    let g = cfg.g_retrieve.min(m);
    let sv = ScoreVector::new(Stage::Retrieval, scores.clone())?;
    let sel = grouped_sample(&features, &sv, g, m, metric)?;
    let mut picked = sel.indices;

    let best = top_k(&scores, 1)[0];
    let mut swap = None;
    if !picked.contains(&best) {
        let groups = sel.segmentation.groups();
        let own = groups.iter().find(|r| r.contains(&best)).expect("tiling");
        let lowest = |pool: &mut dyn Iterator<Item = usize>| {
            pool.min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
        };
        let victim = lowest(&mut picked.iter().copied().filter(|i| own.contains(i)))
            .or_else(|| lowest(&mut picked.iter().copied()));
        if let Some(v) = victim {
            picked.retain(|&i| i != v);
            picked.push(best);
            picked.sort_unstable();
            swap = Some(Swap {
                added: frames[best].index,
                removed: frames[v].index,
            });
        }
    }

    let trace = RetrievalTrace {
        strategy: cfg.score_strategy,
        feature: cfg.retrieval_feature,
        frame_indices: frames.iter().map(|f| f.index).collect(),
        scores: scores.clone(),
        boundaries: sel.segmentation.boundaries,
        budgets: sel.segmentation.budgets,
        selected: picked.iter().map(|&i| frames[i].index).collect(),
        top_k: top_k(&scores, m).into_iter().map(|i| frames[i].index).collect(),
        top_score_swap: swap,
    };
    let out = picked.iter().map(|&i| frames[i].clone()).collect();
    Ok((out, trace))
}

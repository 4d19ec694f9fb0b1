//! Stage 1: caption–frame similarity and grouped reduction of the candidates.

use serde::{Deserialize, Serialize};

use crate::backends::EmbeddingResult;
use crate::error::{BackendError, Result};
use crate::grouping::{grouped_sample, Dissimilarity, ScoreVector, Stage};

/// Mean cosine similarity of every frame to the captions:
/// `S_i = (1/C) * sum_c cos(caption_c, frame_i)`.
pub fn caption_frame_similarity(
    caption_embs: &EmbeddingResult,
    frame_embs: &EmbeddingResult,
) -> Result<ScoreVector> {
    if caption_embs.is_empty() || frame_embs.is_empty() {
        return Err(crate::error::Error::Precondition(
            "need at least one caption and one frame".into(),
        ));
    }
    if caption_embs.dim != frame_embs.dim {
        return Err(BackendError::DimensionMismatch {
            expected: caption_embs.dim,
            got: frame_embs.dim,
        }
        .into());
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let caption_norms: Vec<f64> = caption_embs.vectors.iter().map(|c| norm(c)).collect();
    let c = caption_embs.len() as f64;
    let values = frame_embs
        .vectors
        .iter()
        .map(|f| {
            let nf = norm(f);
            caption_embs
                .vectors
                .iter()
                .zip(&caption_norms)
                .map(|(cap, nc)| {
                    let dot: f64 = cap.iter().zip(f).map(|(a, b)| a * b).sum();
                    dot / (nc * nf)
                })
                .sum::<f64>()
                / c
        })
        .collect();
    Ok(ScoreVector::new(Stage::Prefilter, values)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefilterTrace {
    pub captions: Vec<String>,
    /// Candidate index of each scored frame.
    pub frame_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub boundaries: Vec<usize>,
    pub budgets: Vec<usize>,
    /// Candidate indices of the survivors, ascending.
    pub survivors: Vec<usize>,
    /// True when the candidate list already fit the budget.
    pub passthrough: bool,
}

/// Picks `m` survivor positions from similarity scores, grouping frames by
/// their embeddings. Returns positions into the frame list plus the trace
/// fields of the grouping.
pub fn select_survivors(
    frame_embs: &EmbeddingResult,
    scores: &ScoreVector,
    g: usize,
    m: usize,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let n = frame_embs.len();
    if n <= m {
        return Ok(((0..n).collect(), Vec::new(), vec![n]));
    }
    let sel = grouped_sample(&frame_embs.vectors, scores, g.min(n), m, Dissimilarity::Cosine)?;
    Ok((sel.indices, sel.segmentation.boundaries, sel.segmentation.budgets))
}

#[cfg(feature = "engine")]
pub use engine::prefilter;

#[cfg(feature = "engine")]
mod engine {
    use super::*;
    use crate::backends::{embed_frames, embed_texts, Backends};
    use crate::config::PipelineConfig;
    use crate::decompose::CaptionSet;
    use crate::types::FrameRecord;

    /// Embeds captions and frames (reusing cached frame embeddings), scores
    /// every frame and keeps `m_prefilter` of them in temporal order. Frames
    /// come back with their embeddings cached.
    pub async fn prefilter(
        backends: &Backends,
        mut frames: Vec<FrameRecord>,
        captions: &CaptionSet,
        cfg: &PipelineConfig,
    ) -> Result<(Vec<FrameRecord>, PrefilterTrace)> {
        if frames.is_empty() {
            return Err(crate::error::Error::Precondition("no frames".into()));
        }
        let caption_texts = captions.all();
        let caption_embs = embed_texts(backends.text_embedder.as_ref(), &caption_texts).await?;
        let frame_embs = embed_frames(
            backends.frame_embedder.as_ref(),
            &mut frames,
            backends.max_in_flight,
        )
        .await?;
        let scores = caption_frame_similarity(&caption_embs, &frame_embs)?;
        let (keep, boundaries, budgets) =
            select_survivors(&frame_embs, &scores, cfg.g_prefilter, cfg.m_prefilter)?;
        let passthrough = frames.len() <= cfg.m_prefilter;
        let trace = PrefilterTrace {
            captions: caption_texts,
            frame_indices: frames.iter().map(|f| f.index).collect(),
            scores: scores.values,
            boundaries,
            budgets,
            survivors: keep.iter().map(|&i| frames[i].index).collect(),
            passthrough,
        };
        let mut keep_iter = keep.into_iter().peekable();
        let survivors = frames
            .into_iter()
            .enumerate()
            .filter_map(|(pos, f)| {
                if keep_iter.peek() == Some(&pos) {
                    keep_iter.next();
                    Some(f)
                } else {
                    None
                }
            })
            .collect();
        Ok((survivors, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: Vec<Vec<f64>>) -> EmbeddingResult {
        EmbeddingResult::from_raw(v).unwrap()
    }

    #[test]
    fn identical_vectors_score_one() {
        let s = caption_frame_similarity(&emb(vec![vec![0.6, 0.8]]), &emb(vec![vec![0.6, 0.8]]))
            .unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_captions_average_to_half() {
        let caps = emb(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = caption_frame_similarity(&caps, &emb(vec![vec![1.0, 0.0]])).unwrap();
        assert!((s.values[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_mean_of_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand_vecs = |k: usize| -> Vec<Vec<f64>> {
            (0..k)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        };
        let caps = emb(rand_vecs(3));
        let frames = emb(rand_vecs(5));
        let s = caption_frame_similarity(&caps, &frames).unwrap();
        for (i, f) in frames.vectors.iter().enumerate() {
            // unit vectors: cosine is the plain dot product
            let oracle: f64 = caps
                .vectors
                .iter()
                .map(|c| c.iter().zip(f).map(|(a, b)| a * b).sum::<f64>())
                .sum::<f64>()
                / 3.0;
            assert!((s.values[i] - oracle).abs() < 1e-9);
            assert!((-1.0..=1.0).contains(&s.values[i]));
        }
    }

    #[test]
    fn caption_order_does_not_matter() {
        let caps = emb(vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.5, 0.5, 0.5]]);
        let mut rev = caps.clone();
        rev.vectors.reverse();
        let frames = emb(vec![vec![0.3, 0.1, 0.9], vec![1.0, 1.0, 0.0]]);
        let a = caption_frame_similarity(&caps, &frames).unwrap();
        let b = caption_frame_similarity(&rev, &frames).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let err = caption_frame_similarity(&emb(vec![vec![1.0, 0.0]]), &emb(vec![vec![1.0, 0.0, 0.0]]))
            .unwrap_err();
        assert_eq!(err.kind(), "DimensionMismatch");
    }

    #[test]
    fn short_list_passes_through() {
        let frames = emb(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = ScoreVector::new(Stage::Prefilter, vec![0.1, 0.2]).unwrap();
        let (keep, cuts, budgets) = select_survivors(&frames, &s, 4, 8).unwrap();
        assert_eq!(keep, vec![0, 1]);
        assert!(cuts.is_empty());
        assert_eq!(budgets, vec![2]);
    }
}

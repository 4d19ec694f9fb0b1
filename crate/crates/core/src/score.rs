//! Stage 2a: per-frame yes/no relevance judgments from the lightweight scorer.

use serde::{Deserialize, Serialize};

use crate::backends::{ContentPart, Message, Role, TokenDistribution};
use crate::config::ScoreStrategy;
use crate::types::{FrameRecord, Query};

pub const SCORE_TEMPLATE: &str = include_str!("../assets/score_v1.txt");
pub const SCORE_TEMPLATE_ID: &str = "relevance-v1";

/// Scalar relevance of a distribution and whether it was degenerate
/// (two-word strategy with `p_yes + p_no = 0`, reported as 0).
pub fn relevance_score(dist: &TokenDistribution, strategy: ScoreStrategy) -> (f64, bool) {
    match strategy {
        ScoreStrategy::OneWord => (dist.p_yes.clamp(0.0, 1.0), false),
        ScoreStrategy::TwoWord => {
            let denom = dist.p_yes + dist.p_no;
            if denom <= 0.0 {
                (0.0, true)
            } else {
                (two_word_ratio(dist.p_yes, dist.p_no).clamp(0.0, 1.0), false)
            }
        }
    }
}

/// `a / (a + b)` corrected for the rounding of the sum and of the quotient,
/// so the result is the double nearest the exact ratio of the inputs in all
/// but rare halfway cases. Plain division gives `0.7499999999999999` for
/// `(0.6, 0.2)`; this gives `0.75`.
fn two_word_ratio(a: f64, b: f64) -> f64 {
    let s = a + b;
    let bb = s - a;
    let sum_err = (a - (s - bb)) + (b - bb);
    let r = a / s;
    let residual = (-r).mul_add(s, a);
    r + (residual - r * sum_err) / s
}

/// Frame image followed by the rendered yes/no instruction. `template` may
/// use `{question}`.
pub fn build_score_prompt(frame: &FrameRecord, query: &Query, template: Option<&str>) -> Vec<Message> {
    let text = template
        .unwrap_or(SCORE_TEMPLATE)
        .replace("{question}", query.text.trim());
    vec![Message {
        role: Role::User,
        content: vec![
            Message::image(frame.content_ref.clone()),
            ContentPart::Text {
                text: text.trim_end().to_string(),
            },
        ],
    }]
}

/// One row of the scoring trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub index: usize,
    pub timestamp_s: f64,
    pub p_yes: f64,
    pub p_no: f64,
    pub score: f64,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub template_id: String,
    pub strategy: ScoreStrategy,
    pub frames: Vec<ScoredFrame>,
    pub failed: usize,
}

impl ScoreTrace {
    pub fn new(
        frames: &[FrameRecord],
        dists: &[TokenDistribution],
        errors: &[Option<String>],
        strategy: ScoreStrategy,
        template_id: &str,
    ) -> Self {
        let rows: Vec<ScoredFrame> = frames
            .iter()
            .zip(dists)
            .zip(errors)
            .map(|((f, d), e)| {
                let (score, degenerate) = relevance_score(d, strategy);
                ScoredFrame {
                    index: f.index,
                    timestamp_s: f.timestamp_s,
                    p_yes: d.p_yes,
                    p_no: d.p_no,
                    score,
                    degenerate,
                    error: e.clone(),
                }
            })
            .collect();
        let failed = errors.iter().filter(|e| e.is_some()).count();
        Self {
            template_id: template_id.to_string(),
            strategy,
            frames: rows,
            failed,
        }
    }
}

#[cfg(feature = "engine")]
pub use engine::{score_frames, score_relevance, ScoredFrames};

#[cfg(feature = "engine")]
mod engine {
    use super::*;
    use crate::backends::{fan_out, Backends, RelevanceScorer, ScoreRequest};
    use crate::error::{BackendError, Error, Result};

    /// One relevance judgment, reduced to a [`TokenDistribution`].
    pub async fn score_relevance(
        scorer: &dyn RelevanceScorer,
        frame: &FrameRecord,
        query: &Query,
        template: Option<&str>,
        backends: &Backends,
    ) -> std::result::Result<TokenDistribution, BackendError> {
        let request = ScoreRequest {
            frame,
            query,
            template_id: if template.is_some() { "custom" } else { SCORE_TEMPLATE_ID },
            messages: build_score_prompt(frame, query, template),
            top_k: backends.top_k.max(20),
        };
        let top = scorer.top_logprobs(&request).await?;
        TokenDistribution::from_logprobs(&top, &backends.yes_tokens, &backends.no_tokens)
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct ScoredFrames {
        /// Aligned with the input frames; failed frames hold a zero distribution.
        pub dists: Vec<TokenDistribution>,
        pub errors: Vec<Option<String>>,
    }

    /// Scores every frame concurrently. Individual failures become zero
    /// distributions; more than half failing aborts with
    /// [`Error::ScoringDegraded`].
    pub async fn score_frames(
        backends: &Backends,
        frames: &[FrameRecord],
        query: &Query,
        template: Option<&str>,
    ) -> Result<ScoredFrames> {
        if frames.is_empty() {
            return Err(Error::Precondition("no frames to score".into()));
        }
        query.validate()?;
        let results = fan_out(frames.len(), backends.max_in_flight, |i| {
            score_relevance(backends.scorer.as_ref(), &frames[i], query, template, backends)
        })
        .await;
        let mut dists = Vec::with_capacity(frames.len());
        let mut errors = Vec::with_capacity(frames.len());
        for (frame, r) in frames.iter().zip(results) {
            match r {
                Ok(d) => {
                    dists.push(d);
                    errors.push(None);
                }
                Err(e) => {
                    log::warn!("frame {}: scoring failed: {e}", frame.index);
                    dists.push(TokenDistribution::zero());
                    errors.push(Some(Error::from(e).kind().to_string()));
                }
            }
        }
        let failed = errors.iter().filter(|e| e.is_some()).count();
        if failed * 2 > frames.len() {
            return Err(Error::ScoringDegraded {
                failed,
                total: frames.len(),
            });
        }
        Ok(ScoredFrames { dists, errors })
    }
}

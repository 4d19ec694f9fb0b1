//! Model backends.
//!
//! Four roles are delegated to external models: text embedding, frame
//! embedding, text/vision generation and relevance scoring. Each role is a
//! trait; [`HttpBackend`] speaks the JSON protocol in [`protocol`] and
//! [`MockBackend`] is a seeded deterministic stand-in selected by a
//! `mock://<seed>` URL.

use serde::{Deserialize, Serialize};

use crate::error::BackendError;

pub mod protocol;

#[cfg(feature = "engine")]
mod client;
#[cfg(feature = "engine")]
mod http;
#[cfg(feature = "engine")]
mod mock;

#[cfg(feature = "engine")]
pub use client::{
    embed_frames, embed_texts, fan_out, generate, Backends, FrameEmbedder, Generator,
    RelevanceScorer, ScoreRequest, TextEmbedder,
};
#[cfg(feature = "engine")]
pub use http::HttpBackend;
#[cfg(feature = "engine")]
pub use mock::{MockBackend, MockCalls};

/// Normalized embeddings, one per input item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

impl EmbeddingResult {
    /// L2-normalizes raw vectors and checks they share one dimension.
    pub fn from_raw(raw: Vec<Vec<f64>>) -> Result<Self, BackendError> {
        let dim = raw.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(BackendError::Protocol("empty embedding".into()));
        }
        let mut vectors = Vec::with_capacity(raw.len());
        for v in raw {
            vectors.push(normalize_checked(v, dim)?);
        }
        Ok(Self { vectors, dim })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub(crate) fn normalize_checked(v: Vec<f64>, dim: usize) -> Result<Vec<f64>, BackendError> {
    if v.len() != dim {
        return Err(BackendError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BackendError::Protocol("non-finite embedding component".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(BackendError::Protocol("all-zero embedding".into()));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Probability of the scorer's first answer token being yes / no, plus the
/// returned top tokens (descending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub p_yes: f64,
    pub p_no: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_tokens: Option<Vec<(String, f64)>>,
}

impl TokenDistribution {
    pub fn new(p_yes: f64, p_no: f64) -> Self {
        Self {
            p_yes,
            p_no,
            top_tokens: None,
        }
    }

    /// Placeholder for a frame whose scoring failed.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Builds a distribution from top-K `(token, logprob)` pairs. Tokens are
    /// matched case-insensitively after trimming against the configured
    /// yes/no lists; the probabilities of all matching tokens are summed.
    pub fn from_logprobs(
        top: &[(String, f64)],
        yes_tokens: &[String],
        no_tokens: &[String],
    ) -> Result<Self, BackendError> {
        let matches = |tok: &str, list: &[String]| {
            let t = tok.trim();
            list.iter().any(|c| c.trim().eq_ignore_ascii_case(t))
        };
        let mut tokens: Vec<(String, f64)> = top
            .iter()
            .map(|(t, lp)| (t.clone(), lp.exp().clamp(0.0, 1.0)))
            .collect();
        tokens.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (mut p_yes, mut p_no, mut seen) = (0.0, 0.0, false);
        for (t, p) in &tokens {
            if matches(t, yes_tokens) {
                p_yes += p;
                seen = true;
            } else if matches(t, no_tokens) {
                p_no += p;
                seen = true;
            }
        }
        if !seen {
            return Err(BackendError::TokensAbsent);
        }
        Ok(Self {
            p_yes: p_yes.min(1.0),
            p_no: p_no.min(1.0),
            top_tokens: Some(tokens),
        })
    }

    pub fn is_valid(&self) -> bool {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        unit(self.p_yes)
            && unit(self.p_no)
            && self.p_yes + self.p_no <= 1.0 + 1e-6
            && self.top_tokens.as_ref().is_none_or(|t| {
                t.iter().all(|(_, p)| unit(*p)) && t.windows(2).all(|w| w[0].1 >= w[1].1)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { content_ref: String },
}

/// One chat message; prompts are ordered lists of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: Vec<ContentPart>,
}

impl Message {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            content: vec![ContentPart::Text { text: text.into() }],
        }
    }

    pub fn image(content_ref: impl Into<String>) -> ContentPart {
        ContentPart::Image {
            content_ref: content_ref.into(),
        }
    }

    /// Concatenation of all text parts.
    pub fn joined_text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// All text of a prompt, message by message.
pub fn prompt_text(messages: &[Message]) -> String {
    messages
        .iter()
        .map(Message::joined_text)
        .collect::<Vec<_>>()
        .join("\n")
}

//! Domain values shared by every stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One candidate frame. `index` is its position in the candidate list and is
/// the only identity used by the stages; `timestamp_s` is metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_s: f64,
    pub content_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl FrameRecord {
    pub fn new(index: usize, timestamp_s: f64, content_ref: impl Into<String>) -> Self {
        Self {
            index,
            timestamp_s,
            content_ref: content_ref.into(),
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// Checks that indices are unique and strictly increasing together with
/// timestamps, and that cached embeddings agree on dimension.
pub fn validate_frames(frames: &[FrameRecord]) -> Result<()> {
    let mut dim = None;
    for (pos, f) in frames.iter().enumerate() {
        if !f.timestamp_s.is_finite() || f.timestamp_s < 0.0 {
            return Err(Error::Data(format!(
                "frame {} has invalid timestamp {}",
                f.index, f.timestamp_s
            )));
        }
        if pos > 0 {
            let prev = &frames[pos - 1];
            if f.index <= prev.index || f.timestamp_s <= prev.timestamp_s {
                return Err(Error::Data(format!(
                    "frames must be strictly increasing in index and timestamp (at index {})",
                    f.index
                )));
            }
        }
        if let Some(e) = &f.embedding {
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => {
                    return Err(Error::Data(format!(
                        "frame {} embedding has dimension {}, expected {}",
                        f.index,
                        e.len(),
                        d
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// A question about a video, optionally multiple choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            options: None,
        }
    }

    pub fn with_options<I, S>(mut self, options: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.options = Some(options.into_iter().map(Into::into).collect());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Precondition("query text is empty".into()));
        }
        if let Some(opts) = &self.options {
            let mut seen = std::collections::BTreeSet::new();
            for o in opts {
                if !seen.insert(o.as_str()) {
                    return Err(Error::Precondition(format!("duplicate option `{o}`")));
                }
            }
        }
        Ok(())
    }

    /// Options rendered as `A. first` lines, in order.
    pub fn lettered_options(&self) -> Vec<String> {
        self.options
            .iter()
            .flatten()
            .enumerate()
            .map(|(i, o)| format!("{}. {}", option_letter(i), o))
            .collect()
    }
}

pub(crate) fn option_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

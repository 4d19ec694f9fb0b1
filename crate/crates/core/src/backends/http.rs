use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::Semaphore;

use super::client::{FrameEmbedder, Generator, RelevanceScorer, ScoreRequest, TextEmbedder};
use super::protocol::*;
use super::{ContentPart, GenerationResult, Message};
use crate::config::BackendConfig;
use crate::error::BackendError;
use crate::types::FrameRecord;

/// Client for the JSON protocol in [`super::protocol`].
///
/// Requests are limited to `max_in_flight` concurrent calls and retried with
/// exponential backoff on transport failures and 5xx responses.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    client: reqwest::Client,
    permits: Arc<Semaphore>,
    attempts: usize,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(url: &str, cfg: &BackendConfig) -> Result<Self, BackendError> {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(BackendError::InvalidInput(format!(
                "unsupported backend url `{url}` (expected http(s):// or mock://)"
            )));
        }
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_s.max(1)))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(Self {
            base: url.trim_end_matches('/').to_string(),
            client,
            permits: Arc::new(Semaphore::new(cfg.max_in_flight.max(1))),
            attempts: cfg.retries.max(1),
            backoff: Duration::from_millis(100),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    async fn post<Req, Resp>(&self, path: &str, body: &Req) -> Result<Resp, BackendError>
    where
        Req: Serialize + Sync,
        Resp: DeserializeOwned,
    {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let mut delay = self.backoff;
        let mut last = BackendError::Unavailable("no attempt made".into());
        for attempt in 0..self.attempts {
            if attempt > 0 {
                tokio::time::sleep(delay).await;
                delay *= 2;
            }
            match self.post_once(path, body).await {
                Err(BackendError::Unavailable(msg)) => {
                    log::warn!("{}{path} attempt {} failed: {msg}", self.base, attempt + 1);
                    last = BackendError::Unavailable(msg);
                }
                other => return other,
            }
        }
        Err(last)
    }

    async fn post_once<Req, Resp>(&self, path: &str, body: &Req) -> Result<Resp, BackendError>
    where
        Req: Serialize + Sync,
        Resp: DeserializeOwned,
    {
        let url = format!("{}{path}", self.base);
        let resp = self
            .client
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
        if status.is_success() {
            return serde_json::from_str(&text)
                .map_err(|e| BackendError::Protocol(format!("{url}: {e}")));
        }
        let detail: Option<ErrorResponse> = serde_json::from_str(&text).ok();
        let code = detail.as_ref().map(|d| d.error.code.as_str()).unwrap_or("");
        let message = detail
            .as_ref()
            .map(|d| d.error.message.clone())
            .unwrap_or_else(|| text.clone());
        if status.as_u16() == 413 || code == "context_too_long" {
            Err(BackendError::ContextTooLong(message))
        } else if status.is_server_error() {
            Err(BackendError::Unavailable(format!("{url}: {status} {message}")))
        } else {
            Err(BackendError::Protocol(format!("{url}: {status} {message}")))
        }
    }
}

fn is_url(content_ref: &str) -> bool {
    content_ref.starts_with("http://") || content_ref.starts_with("https://")
}

/// URLs are passed by reference; local files are inlined as base64.
pub(crate) fn wire_image(content_ref: &str) -> Result<WireImage, BackendError> {
    if is_url(content_ref) {
        return Ok(WireImage {
            content_ref: content_ref.to_string(),
            data_base64: None,
        });
    }
    let bytes = std::fs::read(content_ref).map_err(|e| BackendError::FrameUnreadable {
        content_ref: content_ref.to_string(),
        reason: e.to_string(),
    })?;
    Ok(WireImage {
        content_ref: content_ref.to_string(),
        data_base64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
    })
}

pub(crate) fn wire_messages(messages: &[Message]) -> Result<Vec<WireMessage>, BackendError> {
    messages
        .iter()
        .map(|m| {
            let content = m
                .content
                .iter()
                .map(|p| match p {
                    ContentPart::Text { text } => Ok(WirePart::Text { text: text.clone() }),
                    ContentPart::Image { content_ref } => {
                        let img = wire_image(content_ref)?;
                        Ok(WirePart::Image {
                            content_ref: img.content_ref,
                            data_base64: img.data_base64,
                        })
                    }
                })
                .collect::<Result<Vec<_>, BackendError>>()?;
            Ok(WireMessage {
                role: m.role,
                content,
            })
        })
        .collect()
}

fn check_dims(resp: &EmbedResponse) -> Result<(), BackendError> {
    let expected = resp
        .dim
        .or_else(|| resp.vectors.first().map(Vec::len))
        .unwrap_or(0);
    for v in &resp.vectors {
        if v.len() != expected {
            return Err(BackendError::DimensionMismatch {
                expected,
                got: v.len(),
            });
        }
    }
    Ok(())
}

#[async_trait]
impl TextEmbedder for HttpBackend {
    async fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let resp: EmbedResponse = self
            .post(
                EMBED_TEXT_PATH,
                &EmbedTextRequest {
                    texts: texts.to_vec(),
                },
            )
            .await?;
        check_dims(&resp)?;
        Ok(resp.vectors)
    }
}

#[async_trait]
impl FrameEmbedder for HttpBackend {
    async fn embed_frame(&self, frame: &FrameRecord) -> Result<Vec<f64>, BackendError> {
        let image = wire_image(&frame.content_ref)?;
        let resp: EmbedResponse = self
            .post(
                EMBED_IMAGE_PATH,
                &EmbedImageRequest {
                    images: vec![image],
                },
            )
            .await?;
        check_dims(&resp)?;
        let mut vectors = resp.vectors;
        if vectors.len() != 1 {
            return Err(BackendError::Protocol(format!(
                "{} vectors for one image",
                vectors.len()
            )));
        }
        Ok(vectors.pop().expect("one vector"))
    }
}

#[async_trait]
impl Generator for HttpBackend {
    async fn generate(&self, messages: &[Message]) -> Result<GenerationResult, BackendError> {
        let req = GenerateRequest {
            messages: wire_messages(messages)?,
            max_tokens: None,
        };
        let resp: GenerateResponse = self.post(GENERATE_PATH, &req).await?;
        Ok(GenerationResult {
            text: resp.text,
            finish_reason: resp.finish_reason,
        })
    }
}

#[async_trait]
impl RelevanceScorer for HttpBackend {
    async fn top_logprobs(
        &self,
        request: &ScoreRequest<'_>,
    ) -> Result<Vec<(String, f64)>, BackendError> {
        let req = ScoreWireRequest {
            template_id: request.template_id.to_string(),
            messages: wire_messages(&request.messages)?,
            top_k: request.top_k,
        };
        let resp: ScoreResponse = self.post(SCORE_PATH, &req).await?;
        Ok(resp
            .top_logprobs
            .into_iter()
            .map(|t| (t.token, t.logprob))
            .collect())
    }
}

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};

use super::{EmbeddingResult, GenerationResult, HttpBackend, Message, MockBackend};
use crate::config::BackendConfig;
use crate::error::BackendError;
use crate::types::{FrameRecord, Query};

#[async_trait]
pub trait TextEmbedder: Send + Sync {
    /// Raw (unnormalized) vectors, one per text.
    async fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

#[async_trait]
pub trait FrameEmbedder: Send + Sync {
    async fn embed_frame(&self, frame: &FrameRecord) -> Result<Vec<f64>, BackendError>;
}

#[async_trait]
pub trait Generator: Send + Sync {
    async fn generate(&self, messages: &[Message]) -> Result<GenerationResult, BackendError>;
}

/// One frame/query relevance judgment.
#[derive(Debug, Clone)]
pub struct ScoreRequest<'a> {
    pub frame: &'a FrameRecord,
    pub query: &'a Query,
    pub template_id: &'a str,
    pub messages: Vec<Message>,
    pub top_k: usize,
}

#[async_trait]
pub trait RelevanceScorer: Send + Sync {
    /// Top-K `(token, logprob)` pairs of the first generated token.
    async fn top_logprobs(
        &self,
        request: &ScoreRequest<'_>,
    ) -> Result<Vec<(String, f64)>, BackendError>;
}

/// The backend set used by one pipeline run.
#[derive(Clone)]
pub struct Backends {
    pub text_embedder: Arc<dyn TextEmbedder>,
    pub frame_embedder: Arc<dyn FrameEmbedder>,
    pub generator: Arc<dyn Generator>,
    pub answerer: Arc<dyn Generator>,
    pub scorer: Arc<dyn RelevanceScorer>,
    pub max_in_flight: usize,
    pub top_k: usize,
    pub yes_tokens: Vec<String>,
    pub no_tokens: Vec<String>,
}

#[derive(Clone)]
enum Endpoint {
    Mock(Arc<MockBackend>),
    Http(Arc<HttpBackend>),
}

impl Backends {
    /// Builds clients for every role; roles sharing a URL share one client.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let mut cache: BTreeMap<String, Endpoint> = BTreeMap::new();
        let mut get = |url: &str| -> Result<Endpoint, BackendError> {
            if let Some(e) = cache.get(url) {
                return Ok(e.clone());
            }
            let e = if url.starts_with("mock://") {
                Endpoint::Mock(Arc::new(MockBackend::from_url(url)?))
            } else {
                Endpoint::Http(Arc::new(HttpBackend::new(url, cfg)?))
            };
            cache.insert(url.to_string(), e.clone());
            Ok(e)
        };
        let text = get(&cfg.text_embedder)?;
        let frame = get(&cfg.frame_embedder)?;
        let generator = get(&cfg.generator)?;
        let answerer = get(&cfg.answerer)?;
        let scorer = get(&cfg.scorer)?;
        Ok(Self {
            text_embedder: match text {
                Endpoint::Mock(m) => m,
                Endpoint::Http(h) => h,
            },
            frame_embedder: match frame {
                Endpoint::Mock(m) => m,
                Endpoint::Http(h) => h,
            },
            generator: match generator {
                Endpoint::Mock(m) => m,
                Endpoint::Http(h) => h,
            },
            answerer: match answerer {
                Endpoint::Mock(m) => m,
                Endpoint::Http(h) => h,
            },
            scorer: match scorer {
                Endpoint::Mock(m) => m,
                Endpoint::Http(h) => h,
            },
            max_in_flight: cfg.max_in_flight.max(1),
            top_k: cfg.top_k,
            yes_tokens: cfg.yes_tokens.clone(),
            no_tokens: cfg.no_tokens.clone(),
        })
    }

    /// Every role served by the same backend object.
    pub fn uniform<B>(backend: Arc<B>, cfg: &BackendConfig) -> Self
    where
        B: TextEmbedder + FrameEmbedder + Generator + RelevanceScorer + 'static,
    {
        Self {
            text_embedder: backend.clone(),
            frame_embedder: backend.clone(),
            generator: backend.clone(),
            answerer: backend.clone(),
            scorer: backend,
            max_in_flight: cfg.max_in_flight.max(1),
            top_k: cfg.top_k,
            yes_tokens: cfg.yes_tokens.clone(),
            no_tokens: cfg.no_tokens.clone(),
        }
    }
}

/// Runs `f(0..n)` with at most `limit` futures in flight and returns the
/// results in index order, whatever order they completed in.
pub async fn fan_out<T, F, Fut>(n: usize, limit: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> Fut,
    Fut: Future<Output = T>,
{
    let mut done: Vec<(usize, T)> = stream::iter(0..n)
        .map(|i| {
            let fut = f(i);
            async move { (i, fut.await) }
        })
        .buffer_unordered(limit.max(1))
        .collect()
        .await;
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(_, t)| t).collect()
}

/// Embeds texts and L2-normalizes the result.
pub async fn embed_texts(
    backend: &dyn TextEmbedder,
    texts: &[String],
) -> Result<EmbeddingResult, BackendError> {
    if texts.is_empty() {
        return Err(BackendError::InvalidInput("no texts to embed".into()));
    }
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(BackendError::InvalidInput("empty text".into()));
    }
    let raw = backend.embed_texts(texts).await?;
    if raw.len() != texts.len() {
        return Err(BackendError::Protocol(format!(
            "{} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    EmbeddingResult::from_raw(raw)
}

/// Embeds frames, reusing cached embeddings. Fetched embeddings are
/// normalized and written back into `frames`.
pub async fn embed_frames(
    backend: &dyn FrameEmbedder,
    frames: &mut [FrameRecord],
    max_in_flight: usize,
) -> Result<EmbeddingResult, BackendError> {
    if frames.is_empty() {
        return Err(BackendError::InvalidInput("no frames to embed".into()));
    }
    let missing: Vec<usize> = frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.embedding.is_none())
        .map(|(i, _)| i)
        .collect();
    if !missing.is_empty() {
        let snapshot: &[FrameRecord] = frames;
        let fetched = fan_out(missing.len(), max_in_flight, |k| {
            backend.embed_frame(&snapshot[missing[k]])
        })
        .await;
        let fetched: Vec<Vec<f64>> = fetched.into_iter().collect::<Result<_, _>>()?;
        for (&i, v) in missing.iter().zip(fetched) {
            frames[i].embedding = Some(v);
        }
    }
    let result = EmbeddingResult::from_raw(
        frames
            .iter()
            .map(|f| f.embedding.clone().expect("filled above"))
            .collect(),
    )?;
    for (f, v) in frames.iter_mut().zip(&result.vectors) {
        f.embedding = Some(v.clone());
    }
    Ok(result)
}

/// Calls a generator after checking the prompt is nonempty.
pub async fn generate(
    backend: &dyn Generator,
    messages: &[Message],
) -> Result<GenerationResult, BackendError> {
    if messages.is_empty() || messages.iter().all(|m| m.content.is_empty()) {
        return Err(BackendError::InvalidInput("empty prompt".into()));
    }
    let out = backend.generate(messages).await?;
    if out.finish_reason == super::FinishReason::Stop && out.text.trim().is_empty() {
        return Err(BackendError::Protocol("empty generation".into()));
    }
    Ok(out)
}

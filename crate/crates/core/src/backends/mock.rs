//! Seeded deterministic backend.
//!
//! Every answer is a pure function of the seed and the request. Text is
//! embedded as a hashed bag of words; a frame whose `content_ref` has the form
//! `mock:<id>/<words>` is embedded from its words plus a small per-frame
//! perturbation, so captions mentioning those words score high. Other refs
//! must name a readable file, whose bytes seed a random vector.
//!
//! URL form: `mock://<seed>?dim=32&jitter_ms=0&fail=score,tokens&max_context=200000`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::client::{FrameEmbedder, Generator, RelevanceScorer, ScoreRequest, TextEmbedder};
use super::{prompt_text, FinishReason, GenerationResult, Message};
use crate::error::BackendError;
use crate::types::FrameRecord;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "is", "are", "was", "were", "and", "or",
    "what", "which", "who", "whom", "how", "why", "when", "where", "does", "do", "did", "this",
    "that", "these", "those", "it", "its", "be", "for", "with", "from", "by", "as", "video",
    "there", "s", "find", "appears", "appear", "scene",
];

const VIEWS: &[&str] = &[
    "overall scene",
    "temporal order",
    "object detail",
    "causal relation",
    "spatial layout",
];

/// Call counters, one per operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockCalls {
    pub embed_text: usize,
    pub embed_frame: usize,
    pub generate: usize,
    pub score: usize,
}

#[derive(Debug, Default)]
struct Counters {
    embed_text: AtomicUsize,
    embed_frame: AtomicUsize,
    generate: AtomicUsize,
    score: AtomicUsize,
}

#[derive(Debug)]
pub struct MockBackend {
    seed: u64,
    dim: usize,
    jitter_ms: u64,
    max_context: usize,
    fail: Vec<String>,
    counters: Counters,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            dim: 32,
            jitter_ms: 0,
            max_context: 200_000,
            fail: Vec::new(),
            counters: Counters::default(),
        }
    }

    pub fn from_url(url: &str) -> Result<Self, BackendError> {
        let rest = url
            .strip_prefix("mock://")
            .ok_or_else(|| BackendError::InvalidInput(format!("not a mock url: {url}")))?;
        let (seed_part, query) = rest.split_once('?').unwrap_or((rest, ""));
        let seed = if seed_part.is_empty() {
            0
        } else {
            seed_part
                .parse()
                .map_err(|_| BackendError::InvalidInput(format!("bad mock seed in {url}")))?
        };
        let mut mock = Self::new(seed);
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
            let bad = || BackendError::InvalidInput(format!("bad mock option `{pair}`"));
            match k {
                "dim" => mock.dim = v.parse().map_err(|_| bad())?,
                "jitter_ms" => mock.jitter_ms = v.parse().map_err(|_| bad())?,
                "max_context" => mock.max_context = v.parse().map_err(|_| bad())?,
                "fail" => mock.fail = v.split(',').map(str::to_string).collect(),
                _ => return Err(bad()),
            }
        }
        if mock.dim == 0 {
            return Err(BackendError::InvalidInput("mock dim must be positive".into()));
        }
        Ok(mock)
    }

    pub fn with_jitter(mut self, ms: u64) -> Self {
        self.jitter_ms = ms;
        self
    }

    pub fn with_max_context(mut self, chars: usize) -> Self {
        self.max_context = chars;
        self
    }

    pub fn failing(mut self, ops: &[&str]) -> Self {
        self.fail = ops.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn calls(&self) -> MockCalls {
        MockCalls {
            embed_text: self.counters.embed_text.load(Ordering::SeqCst),
            embed_frame: self.counters.embed_frame.load(Ordering::SeqCst),
            generate: self.counters.generate.load(Ordering::SeqCst),
            score: self.counters.score.load(Ordering::SeqCst),
        }
    }

    fn fails(&self, op: &str) -> bool {
        self.fail.iter().any(|f| f == op || f == "all")
    }

    fn rng(&self, tag: &str, data: &[u8]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(tag.as_bytes());
        h.update([0u8]);
        h.update(data);
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }

    fn random_vector(&self, tag: &str, data: &[u8]) -> Vec<f64> {
        let mut rng = self.rng(tag, data);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn bag_of_words(&self, words: &[String]) -> Option<Vec<f64>> {
        if words.is_empty() {
            return None;
        }
        let mut v = vec![0.0; self.dim];
        for w in words {
            for (a, b) in v.iter_mut().zip(self.random_vector("word", w.as_bytes())) {
                *a += b;
            }
        }
        Some(v)
    }

    async fn jitter(&self, data: &[u8]) {
        if self.jitter_ms > 0 {
            let ms = self.rng("jitter", data).random_range(0..=self.jitter_ms);
            tokio::time::sleep(Duration::from_millis(ms)).await;
        }
    }

    fn text_vector(&self, text: &str) -> Vec<f64> {
        self.bag_of_words(&content_words(text))
            .unwrap_or_else(|| self.random_vector("text", text.as_bytes()))
    }

    fn frame_words(frame: &FrameRecord) -> Option<(String, Vec<String>)> {
        let rest = frame.content_ref.strip_prefix("mock:")?;
        let (id, words) = rest.split_once('/').unwrap_or((rest, ""));
        Some((id.to_string(), content_words(words)))
    }

    fn frame_vector(&self, frame: &FrameRecord) -> Result<Vec<f64>, BackendError> {
        match Self::frame_words(frame) {
            Some((id, words)) => {
                let noise = self.random_vector("frame", frame.content_ref.as_bytes());
                Ok(match self.bag_of_words(&words) {
                    Some(bow) => {
                        let n = bow.iter().map(|x| x * x).sum::<f64>().sqrt();
                        bow.iter()
                            .zip(noise)
                            .map(|(b, e)| b / n + 0.05 * e)
                            .collect()
                    }
                    None => self.random_vector("frame", id.as_bytes()),
                })
            }
            None => {
                let bytes = std::fs::read(&frame.content_ref).map_err(|e| {
                    BackendError::FrameUnreadable {
                        content_ref: frame.content_ref.clone(),
                        reason: e.to_string(),
                    }
                })?;
                Ok(self.random_vector("image", &bytes))
            }
        }
    }

    fn relevance(&self, request: &ScoreRequest<'_>) -> Result<f64, BackendError> {
        let frame = request.frame;
        let key = format!("{}\u{0}{}", frame.index, request.query.id);
        let mut rng = self.rng("score", key.as_bytes());
        let noise: f64 = rng.random_range(-0.08..0.08);
        let phase: f64 = self
            .rng("phase", request.query.id.as_bytes())
            .random_range(0.0..std::f64::consts::TAU);
        let base = match Self::frame_words(frame) {
            Some((_, words)) if !words.is_empty() => {
                let fv = self.bag_of_words(&words).expect("nonempty");
                let qv = self.text_vector(&request.query.text);
                0.1 + 0.8 * cosine(&fv, &qv).max(0.0)
            }
            Some(_) => smooth_profile(frame.index, phase),
            None => {
                if !std::path::Path::new(&frame.content_ref).exists() {
                    return Err(BackendError::FrameUnreadable {
                        content_ref: frame.content_ref.clone(),
                        reason: "no such file".into(),
                    });
                }
                smooth_profile(frame.index, phase)
            }
        };
        Ok((base + noise).clamp(0.02, 0.98))
    }

    fn decomposition(&self, question: &str) -> String {
        let words = content_words(question);
        let subject = if words.is_empty() {
            question.trim().to_string()
        } else {
            words.join(" ")
        };
        let entity: Vec<String> = words.iter().take(3).map(|w| format!("a photo of {w}")).collect();
        let body = serde_json::json!({
            "entity": entity,
            "knowledge": [format!("a scene visually associated with {subject}")],
            "causal": [format!("events leading up to {subject}")],
        });
        format!("Here are the captions.\n```json\n{body}\n```\n")
    }

    fn qa_round(&self, prompt: &str) -> String {
        let question = extract_question(prompt);
        let letters: Vec<char> = prompt
            .lines()
            .filter_map(|l| {
                let mut c = l.trim().chars();
                match (c.next(), c.next()) {
                    (Some(ch), Some('.')) if ch.is_ascii_uppercase() => Some(ch),
                    _ => None,
                }
            })
            .collect();
        let mut rng = self.rng("answer", question.as_bytes());
        let answer = if letters.is_empty() {
            ["yes", "no", "one", "two", "three"][rng.random_range(0..5)].to_string()
        } else {
            letters[rng.random_range(0..letters.len())].to_string()
        };
        let prior = prompt
            .lines()
            .filter(|l| l.trim_start().starts_with("Round ") && l.contains(" reason:"))
            .count();
        let view = VIEWS[prior % VIEWS.len()];
        format!(
            "REASON: From the {view} view, the retrieved frames are consistent with this choice.\nANSWER: {answer}"
        )
    }
}

/// Lowercased alphanumeric words minus stopwords.
pub(crate) fn content_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn smooth_profile(index: usize, phase: f64) -> f64 {
    0.5 + 0.35 * (index as f64 * std::f64::consts::TAU / 40.0 + phase).sin()
}

/// Text after the last `Question:` label, up to the end of that line.
fn extract_question(prompt: &str) -> String {
    match prompt.rfind("Question:") {
        Some(p) => prompt[p + "Question:".len()..]
            .lines()
            .next()
            .unwrap_or("")
            .trim()
            .to_string(),
        None => prompt.trim().to_string(),
    }
}

#[async_trait]
impl TextEmbedder for MockBackend {
    async fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.counters.embed_text.fetch_add(1, Ordering::SeqCst);
        if self.fails("text") {
            return Err(BackendError::Unavailable("mock text embedder down".into()));
        }
        self.jitter(texts.join("\n").as_bytes()).await;
        Ok(texts.iter().map(|t| self.text_vector(t)).collect())
    }
}

#[async_trait]
impl FrameEmbedder for MockBackend {
    async fn embed_frame(&self, frame: &FrameRecord) -> Result<Vec<f64>, BackendError> {
        self.counters.embed_frame.fetch_add(1, Ordering::SeqCst);
        if self.fails("frame") {
            return Err(BackendError::Unavailable("mock frame embedder down".into()));
        }
        self.jitter(frame.content_ref.as_bytes()).await;
        self.frame_vector(frame)
    }
}

#[async_trait]
impl Generator for MockBackend {
    async fn generate(&self, messages: &[Message]) -> Result<GenerationResult, BackendError> {
        self.counters.generate.fetch_add(1, Ordering::SeqCst);
        if self.fails("generate") {
            return Err(BackendError::Unavailable("mock generator down".into()));
        }
        let prompt = prompt_text(messages);
        if prompt.chars().count() > self.max_context {
            return Err(BackendError::ContextTooLong(format!(
                "{} chars > {}",
                prompt.chars().count(),
                self.max_context
            )));
        }
        self.jitter(prompt.as_bytes()).await;
        let text = if prompt.contains("\"entity\"") {
            self.decomposition(&extract_question(&prompt))
        } else if prompt.contains("ANSWER:") {
            self.qa_round(&prompt)
        } else {
            let mut rng = self.rng("generate", prompt.as_bytes());
            format!("mock response {:08x}", rng.random::<u32>())
        };
        Ok(GenerationResult {
            text,
            finish_reason: FinishReason::Stop,
        })
    }
}

#[async_trait]
impl RelevanceScorer for MockBackend {
    async fn top_logprobs(
        &self,
        request: &ScoreRequest<'_>,
    ) -> Result<Vec<(String, f64)>, BackendError> {
        self.counters.score.fetch_add(1, Ordering::SeqCst);
        if self.fails("score") {
            return Err(BackendError::Unavailable("mock scorer down".into()));
        }
        let key = format!("{}\u{0}{}", request.frame.index, request.query.id);
        self.jitter(key.as_bytes()).await;
        let r = self.relevance(request)?;
        let mut rng = self.rng("mass", key.as_bytes());
        let mass: f64 = rng.random_range(0.90..0.99);
        let (p_yes, p_no) = (r * mass, (1.0 - r) * mass);
        let rest = 1.0 - mass;
        let mut top: Vec<(String, f64)> = if self.fails("tokens") {
            vec![("The".into(), 0.5), ("I".into(), 0.3)]
        } else {
            vec![
                ("Yes".into(), 0.8 * p_yes),
                ("yes".into(), 0.2 * p_yes),
                ("No".into(), 0.8 * p_no),
                ("no".into(), 0.2 * p_no),
                ("Maybe".into(), 0.6 * rest),
                ("The".into(), 0.4 * rest),
            ]
        };
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        top.truncate(request.top_k.max(1));
        Ok(top.into_iter().map(|(t, p)| (t, p.ln())).collect())
    }
}

//! Pipeline configuration.
//!
//! The on-disk form is JSON with fixed key names; unknown keys are rejected and
//! every missing key takes its default, so `{}` is a complete configuration.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStrategy {
    /// relevance = P(yes)
    OneWord,
    /// relevance = P(yes) / (P(yes) + P(no))
    TwoWord,
}

/// Feature used to group scored frames before retrieval sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalFeature {
    /// (p_yes, p_no) renormalized, compared with L1 distance.
    YesNo,
    /// Probabilities over the union of returned top tokens, compared with cosine.
    TopTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_candidates: usize,
    pub m_prefilter: usize,
    pub m_retrieve: usize,
    pub g_prefilter: usize,
    pub g_retrieve: usize,
    pub score_strategy: ScoreStrategy,
    pub n_views: usize,
    pub retrieval_feature: RetrievalFeature,
    pub backends: BackendConfig,
    pub profiles: ProfileNames,
    /// Overrides the shipped query decomposition template.
    pub decompose_template: Option<String>,
    /// Overrides the shipped relevance scoring template.
    pub score_template: Option<String>,
    /// Image tiling factor of the answer model. Recorded, not used by the engine.
    pub dynamic_resolution: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_candidates: 256,
            m_prefilter: 128,
            m_retrieve: 64,
            g_prefilter: 52,
            g_retrieve: 26,
            score_strategy: ScoreStrategy::TwoWord,
            n_views: 2,
            retrieval_feature: RetrievalFeature::YesNo,
            backends: BackendConfig::default(),
            profiles: ProfileNames::default(),
            decompose_template: None,
            score_template: None,
            dynamic_resolution: 1.0,
        }
    }
}

/// Backend endpoints per model role. `mock://<seed>` selects the seeded mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub text_embedder: String,
    pub frame_embedder: String,
    /// Text generator used for query decomposition.
    pub generator: String,
    /// Vision-language model answering over retrieved frames.
    pub answerer: String,
    pub scorer: String,
    pub max_in_flight: usize,
    pub retries: usize,
    pub top_k: usize,
    pub timeout_s: u64,
    pub yes_tokens: Vec<String>,
    pub no_tokens: Vec<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let mock = "mock://0".to_string();
        Self {
            text_embedder: mock.clone(),
            frame_embedder: mock.clone(),
            generator: mock.clone(),
            answerer: mock.clone(),
            scorer: mock,
            max_in_flight: 8,
            retries: 3,
            top_k: 20,
            timeout_s: 120,
            yes_tokens: vec!["yes".into(), "Yes".into()],
            no_tokens: vec!["no".into(), "No".into()],
        }
    }
}

impl BackendConfig {
    /// Points every role at the same endpoint.
    pub fn all(url: &str) -> Self {
        Self {
            text_embedder: url.into(),
            frame_embedder: url.into(),
            generator: url.into(),
            answerer: url.into(),
            scorer: url.into(),
            ..Self::default()
        }
    }
}

/// Cost-model profile names per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileNames {
    pub decomposer: String,
    pub embedder: String,
    pub scorer: String,
    pub answerer: String,
}

impl Default for ProfileNames {
    fn default() -> Self {
        Self {
            decomposer: "llm-1.7b".into(),
            embedder: "clip-vit-b32".into(),
            scorer: "vlm-2b".into(),
            answerer: "vlm-7b".into(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        validate_config(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Checks every budget invariant. Defaults are already filled by
/// deserialization, so a valid config is returned unchanged.
pub fn validate_config(cfg: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    let positive = [
        ("n_candidates", cfg.n_candidates),
        ("m_prefilter", cfg.m_prefilter),
        ("m_retrieve", cfg.m_retrieve),
        ("g_prefilter", cfg.g_prefilter),
        ("g_retrieve", cfg.g_retrieve),
        ("n_views", cfg.n_views),
        ("backends.max_in_flight", cfg.backends.max_in_flight),
        ("backends.retries", cfg.backends.retries),
    ];
    for (name, v) in positive {
        if v == 0 {
            return Err(ConfigError::NonPositive(name));
        }
    }
    if cfg.m_retrieve > cfg.m_prefilter || cfg.m_prefilter > cfg.n_candidates {
        return Err(ConfigError::BudgetOrderViolation {
            n_candidates: cfg.n_candidates,
            m_prefilter: cfg.m_prefilter,
            m_retrieve: cfg.m_retrieve,
        });
    }
    if cfg.g_prefilter > cfg.m_prefilter {
        return Err(ConfigError::GroupCountTooLarge {
            stage: "prefilter",
            groups: cfg.g_prefilter,
            budget: cfg.m_prefilter,
        });
    }
    if cfg.g_retrieve > cfg.m_retrieve {
        return Err(ConfigError::GroupCountTooLarge {
            stage: "retrieval",
            groups: cfg.g_retrieve,
            budget: cfg.m_retrieve,
        });
    }
    if cfg.backends.yes_tokens.is_empty() || cfg.backends.no_tokens.is_empty() {
        return Err(ConfigError::Parse(
            "yes_tokens and no_tokens must be nonempty".into(),
        ));
    }
    Ok(cfg)
}

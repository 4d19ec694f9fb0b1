//! Analytic compute accounting. Every model is reduced to a linear cost per
//! image frame plus a fixed cost per call.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{ConfigError, Error, Result};

pub const BUILTIN_PROFILES: &str = include_str!("../assets/profiles.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    /// TFLOPs per image frame in a forward pass.
    pub tf_per_frame: f64,
    /// TFLOPs of the text part of one call.
    pub tf_per_call_text: f64,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("tf_per_frame", self.tf_per_frame),
            ("tf_per_call_text", self.tf_per_call_text),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Parse(format!(
                    "profile `{}`: {field} must be a nonnegative number",
                    self.name
                ))
                .into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<String>,
    pub profiles: Vec<ModelProfile>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PROFILES).expect("shipped profiles are valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for p in &set.profiles {
            p.validate()?;
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&ModelProfile> {
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::MissingProfile(name.to_string()))
    }
}

/// `n_calls` calls, each carrying `n_frames` images. A scoring pass over N
/// frames is `(1, N)`; answering with V views over M frames is `(M, V)`;
/// a text-only call is `(0, 1)`.
pub fn estimate_stage(profile: &ModelProfile, n_frames: usize, n_calls: usize) -> f64 {
    n_calls as f64 * (n_frames as f64 * profile.tf_per_frame + profile.tf_per_call_text)
}

/// Reference pipeline that scores every candidate with a large model and
/// answers once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub name: String,
    pub scorer: String,
    pub n_scored: usize,
    pub answerer: String,
    pub n_answer_frames: usize,
    pub n_views: usize,
}

impl Default for Baseline {
    fn default() -> Self {
        Self {
            name: "dense-7b".into(),
            scorer: "vlm-7b".into(),
            n_scored: 256,
            answerer: "vlm-7b".into(),
            n_answer_frames: 64,
            n_views: 1,
        }
    }
}

impl Baseline {
    pub fn total(&self, profiles: &ProfileSet) -> Result<f64> {
        Ok(estimate_stage(profiles.get(&self.scorer)?, 1, self.n_scored)
            + estimate_stage(
                profiles.get(&self.answerer)?,
                self.n_answer_frames,
                self.n_views,
            ))
    }
}

/// Per-stage TFLOPs of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub decompose: f64,
    pub embed: f64,
    pub score: f64,
    pub answer: f64,
    /// decompose + embed + score
    pub retrieval_total: f64,
    pub answer_total: f64,
    pub total: f64,
    pub baseline_name: String,
    pub baseline_total: f64,
    /// `1 - total / baseline_total`
    pub reduction: f64,
}

/// Costs of one query under `cfg`: one decomposition call, one caption
/// embedding batch plus every candidate frame, one scorer call per
/// prefilter survivor, and `n_views` answer calls over the retrieved frames.
pub fn estimate_pipeline(
    cfg: &PipelineConfig,
    profiles: &ProfileSet,
    baseline: &Baseline,
) -> Result<CostBreakdown> {
    let names = &cfg.profiles;
    let decompose = estimate_stage(profiles.get(&names.decomposer)?, 0, 1);
    let embedder = profiles.get(&names.embedder)?;
    let embed = estimate_stage(embedder, 1, cfg.n_candidates) + estimate_stage(embedder, 0, 1);
    let score = estimate_stage(profiles.get(&names.scorer)?, 1, cfg.m_prefilter);
    let answer = estimate_stage(profiles.get(&names.answerer)?, cfg.m_retrieve, cfg.n_views);
    let retrieval_total = decompose + embed + score;
    let total = retrieval_total + answer;
    let baseline_total = baseline.total(profiles)?;
    let reduction = if baseline_total > 0.0 {
        1.0 - total / baseline_total
    } else {
        0.0
    };
    Ok(CostBreakdown {
        decompose,
        embed,
        score,
        answer,
        retrieval_total,
        answer_total: answer,
        total,
        baseline_name: baseline.name.clone(),
        baseline_total,
        reduction,
    })
}

/// Fixed-width text table of a breakdown.
pub fn render_table(b: &CostBreakdown) -> String {
    let rows = [
        ("decompose", b.decompose),
        ("embed", b.embed),
        ("score", b.score),
        ("answer", b.answer),
        ("retrieval total", b.retrieval_total),
        ("answer total", b.answer_total),
        ("total", b.total),
        (b.baseline_name.as_str(), b.baseline_total),
    ];
    let mut out = format!("{:<18}{:>12}\n", "stage", "TFLOPs");
    for (name, v) in rows {
        out.push_str(&format!("{name:<18}{v:>12.2}\n"));
    }
    out.push_str(&format!("{:<18}{:>11.1}%\n", "reduction", b.reduction * 100.0));
    out
}

/// Named estimates keyed by stage, for eval summaries.
pub fn as_map(b: &CostBreakdown) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("decompose", b.decompose),
        ("embed", b.embed),
        ("score", b.score),
        ("answer", b.answer),
        ("total", b.total),
    ])
}

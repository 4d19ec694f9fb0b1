//! End-to-end run over one query and its candidate frames, recorded as a
//! JSON run report.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::costmodel::CostBreakdown;
use crate::decompose::Decomposition;
use crate::error::{Error, ErrorClass};
use crate::multiview::QaTrace;
use crate::prefilter::PrefilterTrace;
use crate::retrieval::RetrievalTrace;
use crate::score::ScoreTrace;
use crate::types::{FrameRecord, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Decompose,
    Prefilter,
    Score,
    Retrieve,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: StageName,
    pub kind: String,
    pub class: ErrorClass,
    pub message: String,
}

impl StageError {
    pub fn new(stage: StageName, err: &Error) -> Self {
        Self {
            stage,
            kind: err.kind().to_string(),
            class: err.class(),
            message: err.to_string(),
        }
    }
}

/// A retrieved frame without its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: usize,
    pub timestamp_s: f64,
    pub content_ref: String,
}

impl From<&FrameRecord> for FrameRef {
    fn from(f: &FrameRecord) -> Self {
        Self {
            index: f.index,
            timestamp_s: f.timestamp_s,
            content_ref: f.content_ref.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Set by the CLI when writing the report; absent from library output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
    pub query: Query,
    pub config: PipelineConfig,
    pub n_candidates: usize,
    #[serde(default)]
    pub decomposition: Option<Decomposition>,
    #[serde(default)]
    pub prefilter: Option<PrefilterTrace>,
    #[serde(default)]
    pub scoring: Option<ScoreTrace>,
    #[serde(default)]
    pub retrieval: Option<RetrievalTrace>,
    #[serde(default)]
    pub retrieved: Option<Vec<FrameRef>>,
    #[serde(default)]
    pub qa: Option<QaTrace>,
    #[serde(default)]
    pub cost: Option<CostBreakdown>,
}

impl RunReport {
    pub fn new(query: Query, config: PipelineConfig, n_candidates: usize) -> Self {
        Self {
            generated_at: None,
            complete: false,
            error: None,
            query,
            config,
            n_candidates,
            decomposition: None,
            prefilter: None,
            scoring: None,
            retrieval: None,
            retrieved: None,
            qa: None,
            cost: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn from_json(s: &str) -> crate::error::Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("run report: {e}")))
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.qa.as_ref().map(|q| q.final_answer.as_str())
    }
}

#[cfg(feature = "engine")]
pub use engine::run_pipeline;

#[cfg(feature = "engine")]
mod engine {
    use super::*;
    use crate::backends::Backends;
    use crate::config::validate_config;
    use crate::costmodel::{estimate_pipeline, Baseline, ProfileSet};
    use crate::decompose::decompose_query;
    use crate::error::Result;
    use crate::manifest::uniform_candidates;
    use crate::multiview::run_multiview;
    use crate::prefilter::prefilter;
    use crate::retrieval::retrieve;
    use crate::score::{score_frames, SCORE_TEMPLATE_ID};
    use crate::types::validate_frames;

    /// Runs decompose, prefilter, score, retrieve and answer in order.
    ///
    /// Invalid configuration, missing cost profiles and bad inputs are
    /// returned as errors before any backend is called. A stage failure
    /// instead yields a report with `complete = false` and the error recorded
    /// against that stage.
    pub async fn run_pipeline(
        backends: &Backends,
        frames: Vec<FrameRecord>,
        query: &Query,
        cfg: &PipelineConfig,
        profiles: &ProfileSet,
        baseline: &Baseline,
    ) -> Result<RunReport> {
        validate_config(cfg.clone())?;
        query.validate()?;
        validate_frames(&frames)?;
        if frames.is_empty() {
            return Err(Error::Data("no frames".into()));
        }
        let cost = estimate_pipeline(cfg, profiles, baseline)?;
        let frames = uniform_candidates(frames, cfg.n_candidates);
        let mut report = RunReport::new(query.clone(), cfg.clone(), frames.len());
        report.cost = Some(cost);

        macro_rules! stage {
            ($name:expr, $fut:expr) => {
                match $fut {
                    Ok(v) => v,
                    Err(e) => {
                        let e: Error = e.into();
                        log::error!("query {}: {:?} stage failed: {e}", query.id, $name);
                        report.error = Some(StageError::new($name, &e));
                        return Ok(report);
                    }
                }
            };
        }

        let dec = stage!(
            StageName::Decompose,
            decompose_query(backends.generator.as_ref(), query, cfg.decompose_template.as_deref())
                .await
        );
        let captions = dec.captions.clone();
        report.decomposition = Some(dec);

        let (survivors, pf) = stage!(
            StageName::Prefilter,
            prefilter(backends, frames, &captions, cfg).await
        );
        report.prefilter = Some(pf);

        let scored = stage!(
            StageName::Score,
            score_frames(backends, &survivors, query, cfg.score_template.as_deref()).await
        );
        let template_id = if cfg.score_template.is_some() {
            "custom"
        } else {
            SCORE_TEMPLATE_ID
        };
        report.scoring = Some(ScoreTrace::new(
            &survivors,
            &scored.dists,
            &scored.errors,
            cfg.score_strategy,
            template_id,
        ));

        let (picked, rt) = stage!(StageName::Retrieve, retrieve(&survivors, &scored.dists, cfg));
        report.retrieval = Some(rt);
        report.retrieved = Some(picked.iter().map(FrameRef::from).collect());

        let qa = stage!(
            StageName::Answer,
            run_multiview(backends.answerer.as_ref(), &picked, query, cfg.n_views).await
        );
        report.qa = Some(qa);
        report.complete = true;
        Ok(report)
    }
}

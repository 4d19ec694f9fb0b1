//! Browser bindings for the static demo page in `www/`.
//!
//! Each export takes plain numbers or strings and returns a JSON string, so
//! the page needs nothing beyond `JSON.parse`. The logic lives in `*_json`
//! functions that also run (and are tested) natively.

use framesift::backends::TokenDistribution;
use framesift::costmodel::{estimate_pipeline, render_table, Baseline, ProfileSet};
use framesift::multiview::{canonicalize_answer, should_stop, vote};
use framesift::retrieval::retrieve;
use framesift::types::FrameRecord;
use framesift::PipelineConfig;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Relevance probabilities with two bumps: a tall one around 25% of the
/// video and a lower one around 70%, over a flat floor.
pub fn bimodal_profile(n: usize, low_peak: f64) -> Vec<f64> {
    let bump = |x: f64, center: f64, width: f64| (-(x - center).powi(2) / (2.0 * width * width)).exp();
    (0..n)
        .map(|i| {
            let x = i as f64 / n.max(1) as f64;
            let p = 0.05 + 0.85 * bump(x, 0.25, 0.1) + (low_peak - 0.05).max(0.0) * bump(x, 0.7, 0.06);
            p.clamp(0.0, 0.97)
        })
        .collect()
}

pub fn compare_retrieval_json(p_yes: &[f64], m: usize, g: usize) -> Result<String, String> {
    if p_yes.is_empty() {
        return Err("empty score profile".into());
    }
    let frames: Vec<FrameRecord> = (0..p_yes.len())
        .map(|i| FrameRecord::new(i, i as f64, format!("frame:{i}")))
        .collect();
    // the remaining mass goes to "no", leaving a little for other tokens
    let dists: Vec<TokenDistribution> = p_yes
        .iter()
        .map(|&p| TokenDistribution::new(p, (0.98 - p).max(0.0)))
        .collect();
    let cfg = PipelineConfig {
        m_retrieve: m,
        g_retrieve: g,
        ..PipelineConfig::default()
    };
    let (_, trace) = retrieve(&frames, &dists, &cfg).map_err(|e| e.to_string())?;
    Ok(json!({
        "scores": trace.scores,
        "boundaries": trace.boundaries,
        "budgets": trace.budgets,
        "selected": trace.selected,
        "top_k": trace.top_k,
    })
    .to_string())
}

pub fn estimate_cost_json(config: &str) -> Result<String, String> {
    let cfg = PipelineConfig::from_json(config).map_err(|e| e.to_string())?;
    let b = estimate_pipeline(&cfg, &ProfileSet::builtin(), &Baseline::default()).map_err(|e| e.to_string())?;
    Ok(json!({ "breakdown": b, "table": render_table(&b) }).to_string())
}

/// Plays the answers of successive rounds through the stopping rule, then
/// votes over the rounds that were actually run.
pub fn multiview_json(answers: &[String], max_rounds: usize) -> String {
    let mut seen = Vec::new();
    for a in answers {
        seen.push(canonicalize_answer(a));
        if should_stop(&seen, seen.len(), max_rounds.max(1)) {
            break;
        }
    }
    let k = seen.len();
    json!({
        "rounds": seen,
        "k": k,
        "early_stop": k < max_rounds && k >= 2,
        "final": vote(&seen),
    })
    .to_string()
}

#[wasm_bindgen(js_name = bimodalProfile)]
pub fn bimodal_profile_js(n: usize, low_peak: f64) -> Vec<f64> {
    bimodal_profile(n, low_peak)
}

#[wasm_bindgen(js_name = compareRetrieval)]
pub fn compare_retrieval(p_yes: Vec<f64>, m: usize, g: usize) -> Result<String, JsError> {
    compare_retrieval_json(&p_yes, m, g).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = estimateCost)]
pub fn estimate_cost(config: &str) -> Result<String, JsError> {
    estimate_cost_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = multiviewVote)]
pub fn multiview_vote(answers: Vec<String>, max_rounds: usize) -> String {
    multiview_json(&answers, max_rounds)
}

//! Plot-ready exports of a run report: per-frame scores with retrieved and
//! Top-K markers, and the cost breakdown.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::costmodel::CostBreakdown;
use crate::error::{Error, Result};
use crate::pipeline::RunReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_index: usize,
    pub timestamp_s: f64,
    pub p_yes: f64,
    pub p_no: f64,
    pub score: f64,
    pub retrieved: bool,
    pub topk: bool,
}

/// One row per scored frame, in temporal order.
pub fn frame_rows(report: &RunReport) -> Result<Vec<FrameRow>> {
    let scoring = report
        .scoring
        .as_ref()
        .ok_or_else(|| Error::IncompleteReport("no scoring stage".into()))?;
    let retrieval = report
        .retrieval
        .as_ref()
        .ok_or_else(|| Error::IncompleteReport("no retrieval stage".into()))?;
    let selected: BTreeSet<usize> = retrieval.selected.iter().copied().collect();
    let topk: BTreeSet<usize> = retrieval.top_k.iter().copied().collect();
    Ok(scoring
        .frames
        .iter()
        .map(|f| FrameRow {
            frame_index: f.index,
            timestamp_s: f.timestamp_s,
            p_yes: f.p_yes,
            p_no: f.p_no,
            score: f.score,
            retrieved: selected.contains(&f.index),
            topk: topk.contains(&f.index),
        })
        .collect())
}

#[derive(Serialize)]
struct CsvRow {
    frame_index: usize,
    timestamp_s: f64,
    p_yes: f64,
    p_no: f64,
    score: f64,
    retrieved: u8,
    topk: u8,
}

fn to_csv<T: Serialize>(records: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

/// Columns `frame_index,timestamp_s,p_yes,p_no,score,retrieved,topk`, with
/// the two markers as 0/1.
pub fn frames_csv(rows: &[FrameRow]) -> String {
    to_csv(rows.iter().map(|r| CsvRow {
        frame_index: r.frame_index,
        timestamp_s: r.timestamp_s,
        p_yes: r.p_yes,
        p_no: r.p_no,
        score: r.score,
        retrieved: u8::from(r.retrieved),
        topk: u8::from(r.topk),
    }))
}

#[derive(Serialize)]
struct CostRow<'a> {
    stage: &'a str,
    tflops: f64,
}

pub fn cost_csv(cost: &CostBreakdown) -> String {
    to_csv(
        [
            ("decompose", cost.decompose),
            ("embed", cost.embed),
            ("score", cost.score),
            ("answer", cost.answer),
            ("retrieval_total", cost.retrieval_total),
            ("answer_total", cost.answer_total),
            ("total", cost.total),
            ("baseline_total", cost.baseline_total),
            ("reduction", cost.reduction),
        ]
        .map(|(stage, tflops)| CostRow { stage, tflops }),
    )
}

/// Both CSV files of a complete report: `(frames, cost)`.
pub fn export(report: &RunReport) -> Result<(String, String)> {
    if !report.complete {
        let stage = report
            .error
            .as_ref()
            .map(|e| format!("failed at {:?}: {}", e.stage, e.kind))
            .unwrap_or_else(|| "run did not finish".into());
        return Err(Error::IncompleteReport(stage));
    }
    let rows = frame_rows(report)?;
    let cost = report
        .cost
        .as_ref()
        .ok_or_else(|| Error::IncompleteReport("no cost estimate".into()))?;
    Ok((frames_csv(&rows), cost_csv(cost)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::TokenDistribution;
    use crate::config::PipelineConfig;
    use crate::costmodel::{estimate_pipeline, Baseline, ProfileSet};
    use crate::retrieval::retrieve;
    use crate::score::ScoreTrace;
    use crate::types::{FrameRecord, Query};

    fn report() -> RunReport {
        let cfg = PipelineConfig {
            m_retrieve: 4,
            g_retrieve: 2,
            ..PipelineConfig::default()
        };
        let frames: Vec<_> = (0..10)
            .map(|i| FrameRecord::new(i, i as f64, format!("mock:{i}")))
            .collect();
        let dists: Vec<_> = (0..10)
            .map(|i| TokenDistribution::new(0.1 + 0.08 * i as f64, 0.1))
            .collect();
        let errors = vec![None; 10];
        let mut r = RunReport::new(Query::new("q", "what?"), cfg.clone(), 10);
        r.scoring = Some(ScoreTrace::new(&frames, &dists, &errors, cfg.score_strategy, "t"));
        r.retrieval = Some(retrieve(&frames, &dists, &cfg).unwrap().1);
        r.cost = Some(estimate_pipeline(&cfg, &ProfileSet::builtin(), &Baseline::default()).unwrap());
        r.complete = true;
        r
    }

    #[test]
    fn one_row_per_scored_frame() {
        let r = report();
        let rows = frame_rows(&r).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows.iter().filter(|x| x.retrieved).count(), 4);
        assert_eq!(rows.iter().filter(|x| x.topk).count(), 4);
        let (frames, cost) = export(&r).unwrap();
        assert_eq!(frames.lines().count(), 11);
        assert!(frames.starts_with("frame_index,timestamp_s,p_yes,p_no,score,retrieved,topk\n"));
        assert!(cost.contains("\ntotal,"));
    }

    #[test]
    fn missing_stage_is_incomplete() {
        let mut r = report();
        r.scoring = None;
        assert_eq!(frame_rows(&r).unwrap_err().kind(), "IncompleteReport");
        let mut r = report();
        r.complete = false;
        assert_eq!(export(&r).unwrap_err().kind(), "IncompleteReport");
    }

    #[test]
    fn survives_json_round_trip() {
        let r = report();
        let back = RunReport::from_json(&r.to_json()).unwrap();
        assert_eq!(export(&back).unwrap(), export(&r).unwrap());
    }
}

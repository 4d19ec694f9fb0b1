//! Grouped inverse-transform sampling.
//!
//! Frames are split into contiguous temporal groups by cutting at the largest
//! adjacent dissimilarities, the frame budget is shared among groups in
//! proportion to their size, and each group is sampled at the uniform
//! quantiles `j / M_g` (j = 1..=M_g) of its normalized cumulative score.
//! Both the pre-filter and the retrieval stage go through [`grouped_sample`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::GroupingError;

/// Added after shifting a group's scores by their minimum so that every frame
/// keeps a strictly positive mass.
pub const SCORE_SHIFT_EPS: f64 = 1e-6;

/// Feature vectors below this norm count as zero vectors.
const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissimilarity {
    /// `1 - cos(a, b)`
    Cosine,
    /// `sum |a_k - b_k|`
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prefilter,
    Retrieval,
}

/// Per-frame scores of one stage, aligned with that stage's frame list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub stage: Stage,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(stage: Stage, values: Vec<f64>) -> Result<Self, GroupingError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GroupingError::InvalidInput(format!(
                "score {i} is not finite"
            )));
        }
        Ok(Self { stage, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Partition of `0..n` into contiguous groups. A boundary `i` separates
/// frame `i - 1` from frame `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub n: usize,
    pub boundaries: Vec<usize>,
    /// Per-group sample budgets; empty until allocated.
    pub budgets: Vec<usize>,
}

impl Segmentation {
    pub fn group_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn groups(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.group_count());
        let mut start = 0;
        for &b in &self.boundaries {
            out.push(start..b);
            start = b;
        }
        out.push(start..self.n);
        out
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups().iter().map(|r| r.len()).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Replaces zero vectors by the previous frame's (already repaired) feature,
/// or by the first nonzero feature when the run starts at index 0.
fn repair_zero_vectors(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = features.to_vec();
    let first_nonzero = features.iter().position(|f| norm(f) > ZERO_NORM);
    let Some(first) = first_nonzero else {
        return out;
    };
    for i in 0..out.len() {
        if norm(&out[i]) > ZERO_NORM {
            continue;
        }
        out[i] = if i < first {
            features[first].clone()
        } else {
            out[i - 1].clone()
        };
    }
    out
}

/// Dissimilarity of each adjacent pair; entry `i - 1` belongs to the pair
/// `(i - 1, i)`. Zero vectors are repaired first.
pub fn adjacent_dissimilarities(
    features: &[Vec<f64>],
    metric: Dissimilarity,
) -> Result<Vec<f64>, GroupingError> {
    if let Some(first) = features.first() {
        let dim = first.len();
        for (i, f) in features.iter().enumerate() {
            if f.len() != dim {
                return Err(GroupingError::InvalidInput(format!(
                    "feature {i} has dimension {}, expected {dim}",
                    f.len()
                )));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(GroupingError::DegenerateFeatures(format!(
                    "feature {i} has a non-finite component"
                )));
            }
        }
    }
    let feats = repair_zero_vectors(features);
    let d = feats
        .windows(2)
        .map(|w| match metric {
            Dissimilarity::Cosine => {
                let (na, nb) = (norm(&w[0]), norm(&w[1]));
                if na <= ZERO_NORM || nb <= ZERO_NORM {
                    // only reachable when every feature is zero
                    0.0
                } else {
                    let dot: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| a * b).sum();
                    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
                }
            }
            Dissimilarity::L1 => w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).sum(),
        })
        .collect();
    Ok(d)
}

/// Splits `features` into `g` contiguous groups by cutting at the `g - 1`
/// largest adjacent dissimilarities (ties go to the earlier position).
pub fn temporal_cluster(
    features: &[Vec<f64>],
    g: usize,
    metric: Dissimilarity,
) -> Result<Segmentation, GroupingError> {
    let n = features.len();
    if g == 0 || g > n {
        return Err(GroupingError::InvalidInput(format!(
            "group count {g} must be in 1..={n}"
        )));
    }
    let d = adjacent_dissimilarities(features, metric)?;
    let mut order: Vec<usize> = (1..n).collect();
    order.sort_by(|&a, &b| d[b - 1].total_cmp(&d[a - 1]).then(a.cmp(&b)));
    let mut boundaries: Vec<usize> = order.into_iter().take(g - 1).collect();
    boundaries.sort_unstable();
    Ok(Segmentation {
        n,
        boundaries,
        budgets: Vec::new(),
    })
}

/// Splits `m` over groups in proportion to their sizes: floor of
/// `N_g * m / n`, then the remainder by largest fractional part, ties to the
/// earlier group. Computed in exact integer arithmetic.
pub fn allocate_budget(group_sizes: &[usize], m: usize) -> Result<Vec<usize>, GroupingError> {
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(GroupingError::InvalidInput(
            "group sizes must be nonempty and positive".into(),
        ));
    }
    let n: usize = group_sizes.iter().sum();
    if m > n {
        return Err(GroupingError::InvalidInput(format!(
            "budget {m} exceeds frame count {n}"
        )));
    }
    let (n128, m128) = (n as u128, m as u128);
    let mut budgets: Vec<usize> = Vec::with_capacity(group_sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(group_sizes.len());
    for (g, &size) in group_sizes.iter().enumerate() {
        let num = size as u128 * m128;
        budgets.push((num / n128) as usize);
        remainders.push((num % n128, g));
    }
    let mut left = m - budgets.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    // Capped groups pass their unit on to the next-largest remainder.
    for &(_, g) in &remainders {
        if left == 0 {
            break;
        }
        if budgets[g] < group_sizes[g] {
            budgets[g] += 1;
            left -= 1;
        }
    }
    debug_assert_eq!(left, 0);
    Ok(budgets)
}

/// Inverse transform sampling of `m_g` distinct local indices from
/// nonnegative `scores`.
///
/// Quantile `j / m_g` selects the smallest index whose normalized cumulative
/// score reaches it. Repeated picks are replaced by the highest-scored
/// unselected indices (ties to the earlier index). With zero total mass the
/// scores are treated as uniform.
pub fn its_sample(scores: &[f64], m_g: usize) -> Result<Vec<usize>, GroupingError> {
    let n = scores.len();
    if m_g > n {
        return Err(GroupingError::BudgetExceedsGroup {
            budget: m_g,
            size: n,
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite() || *s < 0.0) {
        return Err(GroupingError::InvalidInput(format!(
            "score {i} must be finite and nonnegative"
        )));
    }
    if m_g == 0 {
        return Ok(Vec::new());
    }

    let total: f64 = scores.iter().sum();
    let uniform = total <= 0.0 || scores.iter().all(|&s| s == scores[0]);
    let mut picks: Vec<usize> = Vec::with_capacity(m_g);
    if uniform {
        // smallest i with (i + 1) / n >= j / m_g
        for j in 1..=m_g {
            picks.push((j * n).div_ceil(m_g) - 1);
        }
    } else {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &s in scores {
            acc += s;
            cdf.push(acc / total);
        }
        let last_positive = scores.iter().rposition(|&s| s > 0.0).unwrap_or(n - 1);
        for c in &mut cdf[last_positive..] {
            *c = 1.0;
        }
        for j in 1..=m_g {
            let q = j as f64 / m_g as f64;
            picks.push(cdf.partition_point(|&c| c < q));
        }
    }

    let mut selected = vec![false; n];
    let mut count = 0;
    for i in picks {
        if !selected[i] {
            selected[i] = true;
            count += 1;
        }
    }
    if count < m_g {
        let mut rest: Vec<usize> = (0..n).filter(|&i| !selected[i]).collect();
        rest.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        for i in rest.into_iter().take(m_g - count) {
            selected[i] = true;
        }
    }
    Ok((0..n).filter(|&i| selected[i]).collect())
}

/// Result of [`grouped_sample`]: the selection plus the segmentation that
/// produced it (budgets filled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedSelection {
    pub indices: Vec<usize>,
    pub segmentation: Segmentation,
}

/// Shifts scores so the group minimum maps to [`SCORE_SHIFT_EPS`].
pub fn shift_scores(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    scores.iter().map(|s| s - min + SCORE_SHIFT_EPS).collect()
}

/// Cluster, allocate, shift and sample: returns exactly `m` distinct indices
/// in ascending order.
pub fn grouped_sample(
    features: &[Vec<f64>],
    scores: &ScoreVector,
    g: usize,
    m: usize,
    metric: Dissimilarity,
) -> Result<GroupedSelection, GroupingError> {
    let n = features.len();
    if scores.len() != n {
        return Err(GroupingError::InvalidInput(format!(
            "{} scores for {n} frames",
            scores.len()
        )));
    }
    if m > n {
        return Err(GroupingError::InvalidInput(format!(
            "budget {m} exceeds frame count {n}"
        )));
    }
    let mut segmentation = temporal_cluster(features, g, metric)?;
    let groups = segmentation.groups();
    let sizes: Vec<usize> = groups.iter().map(|r| r.len()).collect();
    let budgets = allocate_budget(&sizes, m)?;

    let mut indices = Vec::with_capacity(m);
    for (range, &budget) in groups.iter().zip(&budgets) {
        let shifted = shift_scores(&scores.values[range.clone()]);
        let local = its_sample(&shifted, budget)?;
        indices.extend(local.into_iter().map(|i| range.start + i));
    }
    indices.sort_unstable();
    segmentation.budgets = budgets;
    Ok(GroupedSelection {
        indices,
        segmentation,
    })
}

/// Indices of the `k` highest scores (ties to the earlier index), ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

//! Task-adaptive retrieval: rank every demonstration by a fusion of
//! min-max normalized visual cosine similarity and plan similarity, and keep
//! the top `k_sim`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demo::DemoLibrary;
use crate::skill::{plan_similarity, SkillSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot normalize an empty score list")]
    EmptyInput,
    #[error("demonstrations without embeddings: {0:?}")]
    MissingEmbedding(Vec<String>),
    #[error("invalid retrieval parameter: {0}")]
    InvalidParameter(String),
}

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; `None` for empty, zero or non-finite input.
    pub fn new(values: Vec<f64>) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Self(crate::demo::l2_normalized(values)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub fn visual_similarity(query: &[f64], demo: &[f64]) -> Result<f64, RetrievalError> {
    if query.len() != demo.len() {
        return Err(RetrievalError::DimensionMismatch(query.len(), demo.len()));
    }
    let dot: f64 = query.iter().zip(demo).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// `(s − min)/(max − min)`; every score maps to 0 when all are equal.
pub fn minmax_normalize(scores: &[f64]) -> Result<Vec<f64>, RetrievalError> {
    let (min, max) = scores
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, &s| match acc {
            None => Some((s, s)),
            Some((lo, hi)) => Some((lo.min(s), hi.max(s))),
        })
        .ok_or(RetrievalError::EmptyInput)?;
    let span = max - min;
    Ok(scores.iter().map(|&s| if span > 0.0 { (s - min) / span } else { 0.0 }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k_sim: usize,
    /// Verb-set weight inside plan similarity.
    pub lambda: f64,
    /// Visual weight in the fused score.
    pub alpha: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { k_sim: 17, lambda: 0.7, alpha: 0.5 }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k_sim == 0 {
            return Err(RetrievalError::InvalidParameter("k_sim must be >= 1".into()));
        }
        for (name, v) in [("lambda", self.lambda), ("alpha", self.alpha)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RetrievalError::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub demo_id: String,
    pub s_vis: f64,
    pub s_vis_norm: f64,
    pub s_plan: f64,
    pub fused: f64,
}

impl RankedCandidate {
    /// Tab-separated audit row: id, s_vis, s̃_vis, s_plan, fused.
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.demo_id, self.s_vis, self.s_vis_norm, self.s_plan, self.fused
        )
    }
}

/// Descending fused score, ties by ascending id.
fn rank_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.fused.total_cmp(&a.fused).then_with(|| a.demo_id.cmp(&b.demo_id))
}

/// Fuses precomputed scores and ranks. `s_vis` is normalized over the whole
/// pool before fusion.
pub fn fuse_and_rank(
    ids: &[String],
    s_vis: &[f64],
    s_plan: &[f64],
    alpha: f64,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    let norm = minmax_normalize(s_vis)?;
    let mut ranked: Vec<RankedCandidate> = ids
        .iter()
        .zip(s_vis.iter().zip(&norm).zip(s_plan))
        .map(|(id, ((&v, &n), &p))| RankedCandidate {
            demo_id: id.clone(),
            s_vis: v,
            s_vis_norm: n,
            s_plan: p,
            fused: alpha * n + (1.0 - alpha) * p,
        })
        .collect();
    ranked.sort_by(rank_order);
    Ok(ranked)
}

/// Scores every eligible demonstration and returns the full ranking.
/// Demos whose `task_name` equals `exclude_task` are left out of the pool.
pub fn rank_all(
    query: &EmbeddingVector,
    predicted_plan: &SkillSequence,
    library: &DemoLibrary,
    params: &RetrievalParams,
    exclude_task: Option<&str>,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    params.validate()?;
    let pool: Vec<_> =
        library.demos().iter().filter(|d| exclude_task.is_none_or(|t| d.task_name != t)).collect();
    let missing: Vec<String> = pool.iter().filter(|d| d.embedding.is_none()).map(|d| d.id.clone()).collect();
    if !missing.is_empty() {
        return Err(RetrievalError::MissingEmbedding(missing));
    }
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let scored: Vec<(f64, f64)> = pool
        .par_iter()
        .map(|d| {
            let emb = d.embedding.as_deref().unwrap_or_default();
            let v = visual_similarity(query.as_slice(), emb)?;
            Ok((v, plan_similarity(predicted_plan, &d.skills, params.lambda)))
        })
        .collect::<Result<_, RetrievalError>>()?;
    let ids: Vec<String> = pool.iter().map(|d| d.id.clone()).collect();
    let (s_vis, s_plan): (Vec<f64>, Vec<f64>) = scored.into_iter().unzip();
    fuse_and_rank(&ids, &s_vis, &s_plan, params.alpha)
}

/// Top `k_sim` of [`rank_all`].
pub fn rank_and_select(
    query: &EmbeddingVector,
    predicted_plan: &SkillSequence,
    library: &DemoLibrary,
    params: &RetrievalParams,
    exclude_task: Option<&str>,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    let mut ranked = rank_all(query, predicted_plan, library, params, exclude_task)?;
    ranked.truncate(params.k_sim);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = EmbeddingVector::new(vec![0.3, -0.2, 0.9]).unwrap();
        assert!((visual_similarity(v.as_slice(), v.as_slice()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(visual_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((visual_similarity(&[1.0, 0.0], &[0.6, 0.8]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(visual_similarity(&[1.0], &[1.0, 0.0]), Err(RetrievalError::DimensionMismatch(1, 2)));
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_none());
    }

    #[test]
    fn minmax_examples() {
        let n = minmax_normalize(&[0.2, 0.5, 0.8]).unwrap();
        for (got, want) in n.iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(minmax_normalize(&[0.4, 0.4]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(minmax_normalize(&[7.0]).unwrap(), vec![0.0]);
        assert_eq!(minmax_normalize(&[]), Err(RetrievalError::EmptyInput));
    }

    #[test]
    fn equal_fusion_breaks_ties_by_id() {
        // Raw visual 1.0, 0.5, 0.0 normalize to themselves.
        let ids: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        let ranked = fuse_and_rank(&ids, &[1.0, 0.5, 0.0], &[0.0, 0.5, 1.0], 0.5).unwrap();
        assert!(ranked.iter().all(|r| (r.fused - 0.5).abs() < 1e-12));
        let order: Vec<_> = ranked.iter().map(|r| r.demo_id.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        for r in &ranked {
            assert!((r.fused - (0.5 * r.s_vis_norm + 0.5 * r.s_plan)).abs() <= 1e-12);
        }
    }

    #[test]
    fn params_are_checked() {
        assert!(RetrievalParams::default().validate().is_ok());
        let bad = RetrievalParams { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RetrievalParams { k_sim: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn minmax_preserves_order(scores in prop::collection::vec(-1.0f64..1.0, 2..20)) {
            let n = minmax_normalize(&scores).unwrap();
            prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] < scores[j] {
                        prop_assert!(n[i] < n[j]);
                    }
                }
            }
        }

        #[test]
        fn affine_map_of_visual_scores_keeps_selection(
            raw in prop::collection::vec(-1.0f64..1.0, 2..15),
            plan in prop::collection::vec(0.0f64..1.0, 15),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
            alpha in 0.0f64..=1.0,
        ) {
            let ids: Vec<String> = (0..raw.len()).map(|i| format!("d{i:02}")).collect();
            let plan = &plan[..raw.len()];
            let mapped: Vec<f64> = raw.iter().map(|v| v * scale + shift).collect();
            let a = fuse_and_rank(&ids, &raw, plan, alpha).unwrap();
            let b = fuse_and_rank(&ids, &mapped, plan, alpha).unwrap();
            // Fused values may differ in the last ulp; compare orders where
            // the scores are separated by more than rounding noise.
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.fused - y.fused).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&x.fused));
            }
            let order = |r: &[RankedCandidate]| r.iter().map(|c| c.demo_id.clone()).collect::<Vec<_>>();
            let separated = a.windows(2).all(|w| w[0].fused - w[1].fused > 1e-9);
            if separated {
                prop_assert_eq!(order(&a), order(&b));
            }
        }
    }
}

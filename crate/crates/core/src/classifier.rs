//! Nearest-prototype decisions.
//!
//! Similarity between a query and a prototype is the negative Euclidean
//! distance; this module works with the positive distance throughout, so
//! the winner is always the prototype at *minimum* distance.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use crate::distance::distance;
use crate::distance::squared_l2;
use crate::embedding::{ClassId, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::prototype::PrototypeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DecisionRule {
    WinnerTakesAll,
    /// Uniform majority vote over the `k` nearest prototypes.
    Knn {
        k: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityTransform {
    #[default]
    RawDistance,
    /// Attach per-class scores `exp(-d_c)` normalized to sum to one.
    ExpNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub rule: DecisionRule,
    pub similarity_transform: SimilarityTransform,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        DecisionConfig {
            rule: DecisionRule::WinnerTakesAll,
            similarity_transform: SimilarityTransform::RawDistance,
        }
    }
}

impl DecisionConfig {
    pub fn knn(k: usize) -> Self {
        DecisionConfig {
            rule: DecisionRule::Knn { k },
            ..DecisionConfig::default()
        }
    }

    pub fn validate(&self, set: &PrototypeSet) -> Result<()> {
        if let DecisionRule::Knn { k } = self.rule {
            check_k(k, set.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_id: ClassId,
    /// Prototype index of the prototype that decided the prediction.
    pub prototype: usize,
    pub distance: f64,
    pub scores: Option<BTreeMap<ClassId, f64>>,
}

fn check_query(query: &[f32], set: &PrototypeSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyPrototypeSet);
    }
    if query.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            context: "query vs prototypes".into(),
            expected: set.dim(),
            found: query.len(),
        });
    }
    Ok(())
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 || k > available {
        return Err(Error::KOutOfRange { k, available });
    }
    Ok(())
}

fn by_distance_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Every prototype as `(prototype index, distance)`, nearest first; equal
/// distances keep prototype-index order.
pub fn rank_prototypes(query: &[f32], set: &PrototypeSet) -> Result<Vec<(usize, f64)>> {
    check_query(query, set)?;
    let mut ranked: Vec<(usize, f64)> = set
        .prototypes()
        .iter()
        .enumerate()
        .map(|(i, p)| (i, squared_l2(query, &p.vector)))
        .collect();
    ranked.sort_by(by_distance_then_index);
    ranked.iter_mut().for_each(|e| e.1 = e.1.sqrt());
    Ok(ranked)
}

/// Class of the nearest prototype; ties go to the lowest prototype index.
pub fn classify_wta(query: &[f32], set: &PrototypeSet) -> Result<Prediction> {
    check_query(query, set)?;
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in set.prototypes().iter().enumerate() {
        let d = squared_l2(query, &p.vector);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(Prediction {
        class_id: set.prototypes()[best.0].class_id,
        prototype: best.0,
        distance: best.1.sqrt(),
        scores: None,
    })
}

/// Majority vote over the `k` nearest prototypes. A tied vote goes to the
/// tied class whose best member ranks first.
pub fn classify_knn(query: &[f32], set: &PrototypeSet, k: usize) -> Result<Prediction> {
    check_query(query, set)?;
    check_k(k, set.len())?;
    let mut ranked: Vec<(usize, f64)> = set
        .prototypes()
        .iter()
        .enumerate()
        .map(|(i, p)| (i, squared_l2(query, &p.vector)))
        .collect();
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, by_distance_then_index);
        ranked.truncate(k);
    }
    ranked.sort_by(by_distance_then_index);

    // class -> (votes, rank of first member)
    let mut votes: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (rank, &(i, _)) in ranked.iter().enumerate() {
        let e = votes
            .entry(set.prototypes()[i].class_id)
            .or_insert((0, rank));
        e.0 += 1;
    }
    let (&class_id, &(_, first_rank)) = votes
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .unwrap();
    let (prototype, d2) = ranked[first_rank];
    Ok(Prediction {
        class_id,
        prototype,
        distance: d2.sqrt(),
        scores: None,
    })
}

/// Per-class scores `exp(-d_c)` normalized to sum to one, where `d_c` is the
/// distance to the class's nearest prototype.
///
/// Scores are computed relative to the overall nearest distance, so very
/// distant classes may underflow to zero.
pub fn similarity_scores(query: &[f32], set: &PrototypeSet) -> Result<BTreeMap<ClassId, f64>> {
    check_query(query, set)?;
    let mut best: BTreeMap<ClassId, f64> = BTreeMap::new();
    for p in set.prototypes() {
        let d = squared_l2(query, &p.vector).sqrt();
        best.entry(p.class_id)
            .and_modify(|b| *b = b.min(d))
            .or_insert(d);
    }
    let d_min = best.values().copied().fold(f64::INFINITY, f64::min);
    let mut scores: BTreeMap<ClassId, f64> = best
        .into_iter()
        .map(|(c, d)| (c, (d_min - d).exp()))
        .collect();
    let total: f64 = scores.values().sum();
    scores.values_mut().for_each(|s| *s /= total);
    Ok(scores)
}

/// Applies the configured rule and, if requested, attaches scores.
pub fn classify(query: &[f32], set: &PrototypeSet, config: &DecisionConfig) -> Result<Prediction> {
    let mut pred = match config.rule {
        DecisionRule::WinnerTakesAll => classify_wta(query, set)?,
        DecisionRule::Knn { k } => classify_knn(query, set, k)?,
    };
    if config.similarity_transform == SimilarityTransform::ExpNormalized {
        pred.scores = Some(similarity_scores(query, set)?);
    }
    Ok(pred)
}

/// Brings raw query data into the prototypes' space: checks the fingerprint
/// and applies the set's normalizer unless the data already carries the
/// same normalization.
pub fn prepare_queries<'a>(
    set: &PrototypeSet,
    data: &'a EmbeddingDataset,
) -> Result<Cow<'a, EmbeddingDataset>> {
    set.fingerprint.check_compatible(data.manifest())?;
    match &set.normalizer {
        Some(n) if data.manifest().normalization != set.fingerprint.normalization => {
            Ok(Cow::Owned(n.apply(data)?))
        }
        _ => Ok(Cow::Borrowed(data)),
    }
}

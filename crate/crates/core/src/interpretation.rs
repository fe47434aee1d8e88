//! Explanations by example: ranked prototypes per query, symbolic rules
//! and ranking traces across incremental snapshots.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::rank_prototypes;
use crate::embedding::ClassId;
use crate::error::{Error, Result};
use crate::incremental::IncrementalState;
use crate::prototype::{PrototypeKind, PrototypeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrototype {
    /// Position of the prototype in the set's global order.
    pub prototype: usize,
    #[serde(rename = "class")]
    pub class_id: ClassId,
    pub class_name: String,
    pub distance: f64,
    pub source_index: Option<u64>,
    pub kind: PrototypeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub query_index: Option<u64>,
    pub predicted_class: ClassId,
    pub predicted_name: String,
    pub ground_truth: Option<ClassId>,
    /// All prototypes, nearest first.
    pub ranking: Vec<RankedPrototype>,
    pub top: Vec<RankedPrototype>,
    /// The `k_bottom` farthest prototypes, still in ascending order.
    pub bottom: Vec<RankedPrototype>,
    /// Each distance over the sum of all distances, in ranking order.
    /// Absent when every distance is zero.
    pub normalized_scores: Option<Vec<f64>>,
}

pub fn explain(
    query: &[f32],
    set: &PrototypeSet,
    k_top: usize,
    k_bottom: usize,
) -> Result<ExplanationReport> {
    if set.is_empty() {
        return Err(Error::EmptyPrototypeSet);
    }
    if k_top + k_bottom > set.len() {
        return Err(Error::KOutOfRange {
            k: k_top + k_bottom,
            available: set.len(),
        });
    }
    let ranking: Vec<RankedPrototype> = rank_prototypes(query, set)?
        .into_iter()
        .map(|(i, distance)| {
            let p = &set.prototypes()[i];
            RankedPrototype {
                prototype: i,
                class_id: p.class_id,
                class_name: set.class_name(p.class_id),
                distance,
                source_index: p.source_index,
                kind: p.kind,
            }
        })
        .collect();
    let total: f64 = ranking.iter().map(|r| r.distance).sum();
    let normalized_scores =
        (total > 0.0).then(|| ranking.iter().map(|r| r.distance / total).collect());
    let predicted_class = ranking[0].class_id;
    Ok(ExplanationReport {
        query_index: None,
        predicted_class,
        predicted_name: set.class_name(predicted_class),
        ground_truth: None,
        top: ranking[..k_top].to_vec(),
        bottom: ranking[ranking.len() - k_bottom..].to_vec(),
        ranking,
        normalized_scores,
    })
}

impl ExplanationReport {
    pub fn with_query(mut self, index: u64, ground_truth: Option<ClassId>) -> Self {
        self.query_index = Some(index);
        self.ground_truth = ground_truth;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Similar and dissimilar prototypes side by side, one row per rank.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        match self.query_index {
            Some(i) => writeln!(s, "## Query {i}").unwrap(),
            None => writeln!(s, "## Query").unwrap(),
        }
        writeln!(s).unwrap();
        writeln!(
            s,
            "Predicted: **{}** (class {})",
            self.predicted_name, self.predicted_class
        )
        .unwrap();
        if let Some(gt) = self.ground_truth {
            writeln!(s, "Ground truth: class {gt}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(
            s,
            "| rank | similar | ℓ² | source | dissimilar | ℓ² | source |"
        )
        .unwrap();
        writeln!(s, "|---:|---|---:|---:|---|---:|---:|").unwrap();
        let rows = self.top.len().max(self.bottom.len());
        let cell = |r: Option<&RankedPrototype>| match r {
            Some(r) => format!(
                "{} | {:.3} | {}",
                r.class_name,
                r.distance,
                r.source_index
                    .map(|i| format!("#{i}"))
                    .unwrap_or_else(|| "centroid".into())
            ),
            None => " | | ".into(),
        };
        for i in 0..rows {
            writeln!(
                s,
                "| {} | {} | {} |",
                i + 1,
                cell(self.top.get(i)),
                cell(self.bottom.get(i))
            )
            .unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicRule {
    #[serde(rename = "class")]
    pub class_id: ClassId,
    pub class_name: String,
    /// Source indices of the exemplars, in prototype order.
    pub antecedents: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicRuleSet {
    pub rules: Vec<SymbolicRule>,
}

/// One rule per class over its exemplar prototypes. Classes represented
/// only by centroids get no rule.
pub fn emit_rules(set: &PrototypeSet, max_antecedents: usize) -> Result<SymbolicRuleSet> {
    if max_antecedents == 0 {
        return Err(Error::InvalidParameter(
            "max_antecedents must be at least 1".into(),
        ));
    }
    if !set.method.yields_exemplars() {
        return Err(Error::UnsupportedMethod(set.method));
    }
    let rules: Vec<SymbolicRule> = set
        .per_class()
        .into_iter()
        .filter_map(|(class_id, protos)| {
            let antecedents: Vec<u64> = protos
                .iter()
                .filter_map(|p| p.source_index)
                .take(max_antecedents)
                .collect();
            (!antecedents.is_empty()).then(|| SymbolicRule {
                class_id,
                class_name: set.class_name(class_id),
                antecedents,
            })
        })
        .collect();
    if rules.is_empty() {
        return Err(Error::UnsupportedMethod(set.method));
    }
    Ok(SymbolicRuleSet { rules })
}

impl SymbolicRuleSet {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rules {
            let terms: Vec<String> = r
                .antecedents
                .iter()
                .map(|i| format!("(Q ~ #{i})"))
                .collect();
            writeln!(s, "IF {} THEN '{}'", terms.join(" OR "), r.class_name).unwrap();
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rules serialize")
    }
}

/// Explains `query` against every snapshot, in order.
pub fn trace_ranking(
    query: &[f32],
    snapshots: &[IncrementalState],
    k_top: usize,
    k_bottom: usize,
) -> Result<Vec<ExplanationReport>> {
    snapshots
        .iter()
        .map(|s| explain(query, &s.prototype_set()?, k_top, k_bottom))
        .collect()
}

//! Prototype-based classification over frozen feature embeddings.
//!
//! A dataset of embeddings is reduced to a small set of prototypes per
//! class. Queries are classified by their nearest prototype (or a vote
//! among the nearest few), and every decision can be explained by pointing
//! at the training records that served as prototypes.

pub mod classifier;
mod codec;
pub mod distance;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod incremental;
pub mod interpretation;
pub mod prototype;
pub mod selection;
pub mod synthetic;

pub use classifier::{
    classify, classify_knn, classify_wta, rank_prototypes, DecisionConfig, DecisionRule,
    Prediction, SimilarityTransform,
};
pub use embedding::{
    load_bundle, normalize, save_bundle, split_by_class, ClassId, DatasetManifest,
    EmbeddingDataset, EmbeddingRecord, NormalizationMode, Normalizer,
};
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{evaluate, repeat_runs, sensitivity_sweep, AggregateResult, RunResult};
pub use incremental::{IncrementPlan, IncrementalState, StepMetric};
pub use interpretation::{emit_rules, explain, trace_ranking, ExplanationReport, SymbolicRuleSet};
pub use prototype::{
    load_prototypes, save_prototypes, Budget, Fingerprint, Method, Prototype, PrototypeKind,
    PrototypeSet, SelectionParams,
};
pub use selection::fit_prototypes;

//! Class-incremental learning.
//!
//! Classes arrive in batches. Each step fits prototypes for the new classes
//! only; prototypes of classes seen earlier are never touched, so there is
//! nothing to forget. The backbone is frozen and the decision rule has no
//! trainable state, so there is no parameter update between steps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, DecisionConfig};
use crate::embedding::{split_by_class, ClassId, EmbeddingDataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::evaluation::{derive_seed, mean_std};
use crate::prototype::{Fingerprint, Method, Prototype, PrototypeSet, SelectionParams};
use crate::selection::{fit_classes, validate_params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementPlan {
    pub class_order: Vec<ClassId>,
    /// Classes per step; the last step may be smaller.
    pub increment: usize,
    pub method: Method,
    pub params: SelectionParams,
    pub seed: u64,
    pub decision: DecisionConfig,
}

impl IncrementPlan {
    pub fn steps(&self) -> impl Iterator<Item = &[ClassId]> {
        self.class_order.chunks(self.increment.max(1))
    }

    pub fn n_steps(&self) -> usize {
        self.class_order.len().div_ceil(self.increment.max(1))
    }

    pub fn validate(&self, train: &EmbeddingDataset) -> Result<()> {
        if self.increment == 0 {
            return Err(Error::InvalidParameter(
                "increment must be at least 1".into(),
            ));
        }
        if self.class_order.is_empty() {
            return Err(Error::InvalidParameter("class order is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &c in &self.class_order {
            if !seen.insert(c) {
                return Err(Error::InvalidParameter(format!(
                    "class {c} appears twice in the class order"
                )));
            }
        }
        let present: BTreeSet<ClassId> = train.records().iter().map(|r| r.label).collect();
        if let Some(c) = self.class_order.iter().find(|c| !present.contains(c)) {
            return Err(Error::EmptyBatch(*c));
        }
        validate_params(self.method, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetric {
    pub step: usize,
    pub n_classes: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: Option<f64>,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalState {
    pub fingerprint: Fingerprint,
    pub class_names: Vec<String>,
    pub method: Method,
    pub params: SelectionParams,
    pub seed: u64,
    /// In arrival order.
    pub seen_classes: Vec<ClassId>,
    pub prototypes: BTreeMap<ClassId, Vec<Prototype>>,
    pub step_metrics: Vec<StepMetric>,
}

impl IncrementalState {
    pub fn new(
        fingerprint: Fingerprint,
        method: Method,
        params: SelectionParams,
        seed: u64,
    ) -> Self {
        IncrementalState {
            fingerprint,
            class_names: Vec::new(),
            method,
            params,
            seed,
            seen_classes: Vec::new(),
            prototypes: BTreeMap::new(),
            step_metrics: Vec::new(),
        }
    }

    /// Empty state for the embedding space of `data`.
    pub fn for_dataset(
        data: &EmbeddingDataset,
        method: Method,
        params: SelectionParams,
        seed: u64,
    ) -> Self {
        let mut s = IncrementalState::new(Fingerprint::of(data.manifest()), method, params, seed);
        s.class_names = data.manifest().class_names.clone();
        s
    }

    /// Fits prototypes for the classes in `batches`, which must all be new.
    /// Existing prototype lists are carried over unchanged.
    pub fn advance(&self, batches: &BTreeMap<ClassId, Vec<&EmbeddingRecord>>) -> Result<Self> {
        for (&c, records) in batches {
            if self.prototypes.contains_key(&c) {
                return Err(Error::ClassAlreadySeen(c));
            }
            if records.is_empty() {
                return Err(Error::EmptyBatch(c));
            }
        }
        let fitted = fit_classes(batches, self.method, &self.params, self.seed)?;
        let mut next = self.clone();
        for (c, protos) in fitted {
            next.seen_classes.push(c);
            next.prototypes.insert(c, protos);
        }
        Ok(next)
    }

    /// The union of all per-class prototype lists.
    pub fn prototype_set(&self) -> Result<PrototypeSet> {
        if self.prototypes.is_empty() {
            return Err(Error::EmptyPrototypeSet);
        }
        Ok(PrototypeSet::new(
            self.fingerprint.clone(),
            self.method,
            self.params.clone(),
            self.seed,
            self.prototypes.clone(),
        )?
        .with_class_names(self.class_names.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAccuracy {
    pub accuracy: f64,
    pub correct: usize,
    /// Test records whose label has been seen.
    pub eligible: usize,
}

/// Accuracy over the test records whose labels have been seen.
pub fn evaluate_step(
    state: &IncrementalState,
    test: &EmbeddingDataset,
    decision: &DecisionConfig,
) -> Result<StepAccuracy> {
    if state.seen_classes.is_empty() {
        return Err(Error::EmptyPrototypeSet);
    }
    let set = state.prototype_set()?;
    decision.validate(&set)?;
    let eligible: Vec<&EmbeddingRecord> = test
        .records()
        .iter()
        .filter(|r| state.prototypes.contains_key(&r.label))
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleRecords);
    }
    let correct = eligible
        .par_iter()
        .map(|r| classify(&r.vector, &set, decision).map(|p| (p.class_id == r.label) as usize))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(StepAccuracy {
        accuracy: correct as f64 / eligible.len() as f64,
        correct,
        eligible: eligible.len(),
    })
}

/// Runs every step of `plan` once, recording per-step accuracy.
pub fn run_plan(
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    plan: &IncrementPlan,
) -> Result<IncrementalState> {
    Ok(run_plan_snapshots(train, test, plan)?
        .pop()
        .expect("a valid plan has at least one step"))
}

/// Like [`run_plan`], returning the state after every step.
pub fn run_plan_snapshots(
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    plan: &IncrementPlan,
) -> Result<Vec<IncrementalState>> {
    plan.validate(train)?;
    let by_class = split_by_class(train);
    let mut state =
        IncrementalState::for_dataset(train, plan.method, plan.params.clone(), plan.seed);
    let mut snapshots = Vec::with_capacity(plan.n_steps());
    for (step, classes) in plan.steps().enumerate() {
        let batches: BTreeMap<ClassId, Vec<&EmbeddingRecord>> = classes
            .iter()
            .map(|c| (*c, by_class.get(c).cloned().unwrap_or_default()))
            .collect();
        let start = Instant::now();
        state = state.advance(&batches)?;
        let fit_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let acc = evaluate_step(&state, test, &plan.decision)?;
        let eval_seconds = start.elapsed().as_secs_f64();
        state.step_metrics.push(StepMetric {
            step: step + 1,
            n_classes: state.seen_classes.len(),
            accuracy_mean: acc.accuracy,
            accuracy_std: None,
            fit_seconds,
            eval_seconds,
        });
        snapshots.push(state.clone());
    }
    Ok(snapshots)
}

/// Runs the plan `n_runs` times with derived seeds and aggregates each
/// step's accuracy as mean and sample standard deviation.
pub fn run_plan_repeated(
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    plan: &IncrementPlan,
    n_runs: usize,
) -> Result<Vec<StepMetric>> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be at least 1".into()));
    }
    let runs = (0..n_runs)
        .map(|run| {
            let p = IncrementPlan {
                seed: derive_seed(plan.seed, run),
                ..plan.clone()
            };
            run_plan(train, test, &p).map(|s| s.step_metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = runs[0].len();
    Ok((0..steps)
        .map(|i| {
            let col = |f: fn(&StepMetric) -> f64| runs.iter().map(|r| f(&r[i])).collect::<Vec<_>>();
            let (accuracy_mean, accuracy_std) = mean_std(&col(|m| m.accuracy_mean));
            StepMetric {
                step: runs[0][i].step,
                n_classes: runs[0][i].n_classes,
                accuracy_mean,
                accuracy_std,
                fit_seconds: mean_std(&col(|m| m.fit_seconds)).0,
                eval_seconds: mean_std(&col(|m| m.eval_seconds)).0,
            }
        })
        .collect())
}

pub const STEP_CSV_HEADER: &str =
    "step,n_classes,accuracy_mean,accuracy_std,fit_seconds,eval_seconds";

/// Writes step metrics as CSV. Timing columns stay empty unless
/// `with_timing` is set.
pub fn write_step_csv<W: Write>(
    out: &mut W,
    metrics: &[StepMetric],
    with_timing: bool,
) -> std::io::Result<()> {
    writeln!(out, "{STEP_CSV_HEADER}")?;
    for m in metrics {
        let std = m.accuracy_std.map(|s| s.to_string()).unwrap_or_default();
        let (fit, eval) = if with_timing {
            (m.fit_seconds.to_string(), m.eval_seconds.to_string())
        } else {
            (String::new(), String::new())
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.step, m.n_classes, m.accuracy_mean, std, fit, eval
        )?;
    }
    Ok(())
}

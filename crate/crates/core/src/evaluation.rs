//! Accuracy, macro-F1, confusion matrices and repeated-run statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, prepare_queries, DecisionConfig};
use crate::embedding::{ClassId, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::prototype::{Budget, Method, PrototypeSet, SelectionParams};
use crate::selection::fit_prototypes;

/// Seed for run `run` of a repeated experiment. Run 0 uses the base seed.
pub fn derive_seed(base_seed: u64, run: usize) -> u64 {
    base_seed.wrapping_add((run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Rows are true classes, columns predicted classes, both in `classes`
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(classes: Vec<ClassId>, pairs: &[(ClassId, ClassId)]) -> Result<Self> {
        let pos: BTreeMap<ClassId, usize> =
            classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
        for &(truth, pred) in pairs {
            let t = *pos.get(&truth).ok_or(Error::UnseenLabel(truth))?;
            let p = *pos.get(&pred).ok_or(Error::UnseenLabel(pred))?;
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    /// Unweighted mean of per-class F1 over classes that occur as a true or
    /// predicted label. A class with no true positives scores 0.
    pub fn macro_f1(&self) -> f64 {
        let n = self.classes.len();
        let mut sum = 0.0;
        let mut used = 0usize;
        for i in 0..n {
            let tp = self.counts[i][i] as f64;
            let actual: u64 = self.counts[i].iter().sum();
            let predicted: u64 = (0..n).map(|r| self.counts[r][i]).sum();
            if actual == 0 && predicted == 0 {
                continue;
            }
            used += 1;
            let denom = actual as f64 + predicted as f64;
            if tp > 0.0 {
                sum += 2.0 * tp / denom;
            }
        }
        if used == 0 {
            0.0
        } else {
            sum / used as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub n_prototypes: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
}

/// Mean and sample (n - 1) standard deviation. The deviation is absent
/// for a single value. Identical inputs give their common value and a
/// deviation of exactly zero.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (f64::NAN, None);
    }
    let anchor = values[0];
    let n = values.len() as f64;
    let shift = values.iter().map(|v| v - anchor).sum::<f64>() / n;
    let mean = anchor + shift;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values
        .iter()
        .map(|v| (v - anchor - shift).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, Some(var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub method: Method,
    pub budget: Option<Budget>,
    pub n_runs: usize,
    pub n_prototypes_mean: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: Option<f64>,
    pub f1_mean: f64,
    pub f1_std: Option<f64>,
    pub fit_seconds_mean: f64,
    pub eval_seconds_mean: f64,
    pub runs: Vec<RunResult>,
}

impl AggregateResult {
    pub fn from_runs(method: Method, budget: Option<Budget>, runs: Vec<RunResult>) -> Self {
        let col = |f: fn(&RunResult) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
        let (accuracy_mean, accuracy_std) = mean_std(&col(|r| r.accuracy));
        let (f1_mean, f1_std) = mean_std(&col(|r| r.macro_f1));
        AggregateResult {
            method,
            budget,
            n_runs: runs.len(),
            n_prototypes_mean: mean_std(&col(|r| r.n_prototypes as f64)).0,
            accuracy_mean,
            accuracy_std,
            f1_mean,
            f1_std,
            fit_seconds_mean: mean_std(&col(|r| r.fit_seconds)).0,
            eval_seconds_mean: mean_std(&col(|r| r.eval_seconds)).0,
            runs,
        }
    }
}

/// Classifies every test record and tallies the metrics. `fit_seconds` is
/// left at zero; callers that fit the set fill it in.
pub fn evaluate(
    set: &PrototypeSet,
    decision: &DecisionConfig,
    test: &EmbeddingDataset,
) -> Result<RunResult> {
    decision.validate(set)?;
    let test = prepare_queries(set, test)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(r) = test.records().iter().find(|r| !set.contains_class(r.label)) {
        return Err(Error::UnseenLabel(r.label));
    }
    let start = Instant::now();
    let pairs: Vec<(ClassId, ClassId)> = test
        .records()
        .par_iter()
        .map(|r| classify(&r.vector, set, decision).map(|p| (r.label, p.class_id)))
        .collect::<Result<_>>()?;
    let eval_seconds = start.elapsed().as_secs_f64();
    let confusion = ConfusionMatrix::from_pairs(set.classes().collect(), &pairs)?;
    Ok(RunResult {
        seed: set.seed,
        n_prototypes: set.len(),
        accuracy: confusion.accuracy(),
        macro_f1: confusion.macro_f1(),
        confusion,
        fit_seconds: 0.0,
        eval_seconds,
    })
}

/// Fits and evaluates `n_runs` times with derived seeds.
pub fn repeat_runs(
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    method: Method,
    params: &SelectionParams,
    decision: &DecisionConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<AggregateResult> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be at least 1".into()));
    }
    let runs = (0..n_runs)
        .map(|run| {
            let seed = derive_seed(base_seed, run);
            let start = Instant::now();
            let set = fit_prototypes(train, method, params, seed)?;
            let fit_seconds = start.elapsed().as_secs_f64();
            let mut result = evaluate(&set, decision, test)?;
            result.fit_seconds = fit_seconds;
            Ok(result)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateResult::from_runs(method, params.budget, runs))
}

/// One [`repeat_runs`] aggregate per budget.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    budgets: &[Budget],
    method: Method,
    params: &SelectionParams,
    decision: &DecisionConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<AggregateResult>> {
    if budgets.is_empty() {
        return Err(Error::InvalidParameter("no budgets given".into()));
    }
    budgets
        .iter()
        .map(|&b| {
            let p = SelectionParams {
                budget: Some(b),
                ..params.clone()
            };
            repeat_runs(train, test, method, &p, decision, n_runs, base_seed)
        })
        .collect()
}

pub const RESULTS_CSV_HEADER: &str =
    "method,budget,n_prototypes,accuracy_mean,accuracy_std,f1_mean,f1_std,fit_seconds,eval_seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the results table. Timing columns are left empty unless
/// `with_timing` is set, so that outputs are reproducible byte for byte.
pub fn write_results_csv<W: Write>(
    out: &mut W,
    results: &[AggregateResult],
    with_timing: bool,
) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_CSV_HEADER}")?;
    for r in results {
        let budget = r.budget.map(|b| b.to_string()).unwrap_or_default();
        let (fit, eval) = if with_timing {
            (
                r.fit_seconds_mean.to_string(),
                r.eval_seconds_mean.to_string(),
            )
        } else {
            (String::new(), String::new())
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            budget,
            r.n_prototypes_mean,
            r.accuracy_mean,
            opt(r.accuracy_std),
            r.f1_mean,
            opt(r.f1_std),
            fit,
            eval
        )?;
    }
    Ok(())
}

/// Class ids occurring in a dataset.
pub fn label_set(data: &EmbeddingDataset) -> BTreeSet<ClassId> {
    data.records().iter().map(|r| r.label).collect()
}

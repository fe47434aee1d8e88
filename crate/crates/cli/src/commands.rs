use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ideal_core::classifier::{classify, prepare_queries, similarity_scores};
use ideal_core::embedding::{decode_bundle, import_csv as import};
use ideal_core::evaluation::{evaluate, write_results_csv, AggregateResult};
use ideal_core::incremental::{run_plan_repeated, write_step_csv, IncrementPlan};
use ideal_core::prototype::{decode_prototypes, PROTOTYPE_MAGIC};
use ideal_core::{
    emit_rules, explain as explain_query, fit_prototypes, load_bundle, load_prototypes, normalize,
    repeat_runs, save_prototypes, sensitivity_sweep, Budget, EmbeddingDataset, Error, Method,
    NormalizationMode, Normalizer, PrototypeKind, Result,
};

use crate::args::*;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn json_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Normalizes training data and brings test data into the same space.
fn normalize_pair(
    train: EmbeddingDataset,
    test: EmbeddingDataset,
    mode: NormalizationMode,
) -> Result<(EmbeddingDataset, EmbeddingDataset, Option<Normalizer>)> {
    if mode == NormalizationMode::None {
        return Ok((train, test, None));
    }
    let (train, normalizer) = normalize(&train, mode)?;
    let test = if test.manifest().normalization == mode {
        test
    } else {
        normalizer.apply(&test)?
    };
    Ok((train, test, Some(normalizer)))
}

/// JSON of `value` with wall-clock fields removed unless timing was asked
/// for, so that repeated runs write identical files.
fn results_json(results: &[AggregateResult], with_timing: bool) -> String {
    let mut v = serde_json::to_value(results).expect("results serialize");
    if !with_timing {
        for r in v.as_array_mut().into_iter().flatten() {
            let r = r.as_object_mut().unwrap();
            r.remove("fit_seconds_mean");
            r.remove("eval_seconds_mean");
            for run in r
                .get_mut("runs")
                .and_then(|x| x.as_array_mut())
                .into_iter()
                .flatten()
            {
                let run = run.as_object_mut().unwrap();
                run.remove("fit_seconds");
                run.remove("eval_seconds");
            }
        }
    }
    let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
    s.push('\n');
    s
}

fn write_results(out: &Path, results: &[AggregateResult], with_timing: bool) -> Result<()> {
    let mut csv = Vec::new();
    write_results_csv(&mut csv, results, with_timing).map_err(|e| Error::io(out, e))?;
    write(out, csv)?;
    write(&json_path(out), results_json(results, with_timing))
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let train = load_bundle(&a.train)?;
    let params = a.method.params();
    let mode = a.method.tuning.normalize.into();
    let (train, normalizer) = if mode == NormalizationMode::None {
        (train, None)
    } else {
        let (t, n) = normalize(&train, mode)?;
        (t, Some(n))
    };
    let mut set = fit_prototypes(
        &train,
        a.method.method.into(),
        &params,
        a.method.tuning.seed,
    )?;
    set.normalizer = normalizer;
    save_prototypes(&set, &a.out)?;
    eprintln!(
        "fitted {} prototypes for {} classes",
        set.len(),
        set.classes().count()
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let test = load_bundle(&a.test)?;
    let decision = a.decision.config();
    let result = match (&a.prototypes, &a.train, a.method) {
        (Some(p), _, _) => {
            let set = load_prototypes(p)?;
            let run = evaluate(&set, &decision, &test)?;
            AggregateResult::from_runs(set.method, set.params.budget, vec![run])
        }
        (None, Some(train), Some(method)) => {
            let train = load_bundle(train)?;
            let (train, test, _) = normalize_pair(train, test, a.tuning.normalize.into())?;
            let params = a.tuning.params(a.budget.budget());
            repeat_runs(
                &train,
                &test,
                method.into(),
                &params,
                &decision,
                a.runs,
                a.tuning.seed,
            )?
        }
        _ => {
            return Err(Error::InvalidParameter(
                "give either --prototypes or --train with --method".into(),
            ))
        }
    };
    eprintln!(
        "accuracy {:.4}, macro-F1 {:.4} over {} run(s)",
        result.accuracy_mean, result.f1_mean, result.n_runs
    );
    write_results(&a.out, &[result], a.record_timing)
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let set = load_prototypes(&a.prototypes)?;
    let data = load_bundle(&a.data)?;
    let decision = a.decision.config();
    decision.validate(&set)?;
    let data = prepare_queries(&set, &data)?;
    let classes: Vec<u32> = set.classes().collect();
    let mut out = String::from("index,label,predicted,distance,prototype");
    if a.scores {
        for c in &classes {
            write!(out, ",score_{c}").unwrap();
        }
    }
    out.push('\n');
    for r in data.records() {
        let p = classify(&r.vector, &set, &decision)?;
        write!(
            out,
            "{},{},{},{},{}",
            r.index, r.label, p.class_id, p.distance, p.prototype
        )
        .unwrap();
        if a.scores {
            let scores = match p.scores {
                Some(s) => s,
                None => similarity_scores(&r.vector, &set)?,
            };
            for c in &classes {
                write!(out, ",{}", scores[c]).unwrap();
            }
        }
        out.push('\n');
    }
    write(&a.out, out)
}

pub fn incremental(a: &IncrementalArgs) -> Result<()> {
    let train = load_bundle(&a.train)?;
    let test = load_bundle(&a.test)?;
    let (train, test, _) = normalize_pair(train, test, a.method.tuning.normalize.into())?;
    let class_order = match &a.class_order {
        Some(order) => order.clone(),
        None => train
            .records()
            .iter()
            .map(|r| r.label)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let plan = IncrementPlan {
        class_order,
        increment: a.increment,
        method: a.method.method.into(),
        params: a.method.params(),
        seed: a.method.tuning.seed,
        decision: a.decision.config(),
    };
    let metrics = run_plan_repeated(&train, &test, &plan, a.runs)?;
    if let Some(last) = metrics.last() {
        eprintln!(
            "{} steps, final accuracy {:.4} over {} classes",
            metrics.len(),
            last.accuracy_mean,
            last.n_classes
        );
    }
    let mut csv = Vec::new();
    write_step_csv(&mut csv, &metrics, a.record_timing).map_err(|e| Error::io(&a.out, e))?;
    write(&a.out, csv)
}

pub fn explain(a: &ExplainArgs) -> Result<()> {
    let set = load_prototypes(&a.prototypes)?;
    let data = load_bundle(&a.data)?;
    let data = prepare_queries(&set, &data)?;
    let record = data.record_by_index(a.query).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no record with index {} in {}",
            a.query,
            a.data.display()
        ))
    })?;
    let report = explain_query(&record.vector, &set, a.top, a.bottom)?
        .with_query(record.index, Some(record.label));
    let text = match a.format {
        ReportFormat::Markdown => report.to_markdown(),
        ReportFormat::Json => report.to_json() + "\n",
    };
    emit(a.out.as_ref(), &text)
}

pub fn rules(a: &RulesArgs) -> Result<()> {
    let set = load_prototypes(&a.prototypes)?;
    let rules = emit_rules(&set, a.max_antecedents)?;
    let text = match a.format {
        RulesFormat::Text => rules.render_text(),
        RulesFormat::Json => rules.to_json() + "\n",
    };
    emit(a.out.as_ref(), &text)
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let bytes = std::fs::read(&a.path).map_err(|e| Error::io(&a.path, e))?;
    let mut out = String::new();
    if bytes.starts_with(PROTOTYPE_MAGIC) {
        let (dim, protos) = decode_prototypes(&bytes)?;
        writeln!(out, "prototype file {}", a.path.display()).unwrap();
        writeln!(out, "dimension: {dim}").unwrap();
        writeln!(out, "prototypes: {}", protos.len()).unwrap();
        let exemplars = protos
            .iter()
            .filter(|p| p.kind == PrototypeKind::Exemplar)
            .count();
        writeln!(
            out,
            "exemplars: {exemplars}, centroids: {}",
            protos.len() - exemplars
        )
        .unwrap();
        let mut per_class = std::collections::BTreeMap::new();
        for p in &protos {
            *per_class.entry(p.class_id).or_insert(0usize) += 1;
        }
        if let Ok(set) = load_prototypes(&a.path) {
            writeln!(out, "method: {}", set.method).unwrap();
            if let Some(b) = set.params.budget {
                writeln!(out, "budget: {b}").unwrap();
            }
            writeln!(out, "seed: {}", set.seed).unwrap();
            writeln!(out, "backbone: {}", set.fingerprint.backbone_id).unwrap();
            writeln!(out, "normalization: {}", set.fingerprint.normalization).unwrap();
            for (c, n) in &per_class {
                writeln!(out, "  class {c} ({}): {n}", set.class_name(*c)).unwrap();
            }
        } else {
            writeln!(out, "sidecar: missing or unreadable").unwrap();
            for (c, n) in &per_class {
                writeln!(out, "  class {c}: {n}").unwrap();
            }
        }
    } else {
        let raw = decode_bundle(&bytes)?;
        writeln!(out, "embedding bundle {}", a.path.display()).unwrap();
        writeln!(out, "records: {}", raw.labels.len()).unwrap();
        writeln!(out, "dimension: {}", raw.dim).unwrap();
        let mut per_class = std::collections::BTreeMap::new();
        for &l in &raw.labels {
            *per_class.entry(l).or_insert(0usize) += 1;
        }
        let ds = load_bundle(&a.path)?;
        let manifest = ds.manifest();
        writeln!(out, "dataset: {}", manifest.dataset_name).unwrap();
        writeln!(out, "backbone: {}", manifest.backbone_id).unwrap();
        writeln!(out, "normalization: {}", manifest.normalization).unwrap();
        writeln!(out, "classes: {}", per_class.len()).unwrap();
        for (c, n) in &per_class {
            writeln!(out, "  class {c} ({}): {n}", manifest.class_name(*c)).unwrap();
        }
    }
    print!("{out}");
    Ok(())
}

pub fn import_csv(a: &ImportCsvArgs) -> Result<()> {
    let name = match &a.name {
        Some(n) => n.clone(),
        None => a
            .csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
    };
    let ds = import(&a.csv, &a.out, &name, &a.backbone, a.class_names.clone())?;
    eprintln!("wrote {} records of dimension {}", ds.len(), ds.dim());
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let budgets: Vec<Budget> = match (&a.budgets.budget_fracs, &a.budgets.budget_counts) {
        (Some(f), _) => f.iter().map(|&x| Budget::FractionOfClass(x)).collect(),
        (_, Some(k)) => k.iter().map(|&x| Budget::FixedPerClass(x)).collect(),
        _ => Vec::new(),
    };
    let train = load_bundle(&a.train)?;
    let test = load_bundle(&a.test)?;
    let (train, test, _) = normalize_pair(train, test, a.tuning.normalize.into())?;
    let method: Method = a.method.into();
    let params = a.tuning.params(None);
    let results = sensitivity_sweep(
        &train,
        &test,
        &budgets,
        method,
        &params,
        &a.decision.config(),
        a.runs,
        a.tuning.seed,
    )?;
    write_results(&a.out, &results, a.record_timing)
}

//! Per-class prototype selection.
//!
//! Every strategy works on the records of a single class; [`fit_prototypes`]
//! runs one strategy over all classes of a dataset. Per-class fits are
//! independent, seeded by [`class_seed`], and run in parallel.

mod elm;
mod kmeans;
mod random;
mod xdnn;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::embedding::{split_by_class, ClassId, EmbeddingDataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::prototype::{Fingerprint, Method, Prototype, PrototypeSet, SelectionParams};

pub use elm::{elm_fit, ElmStream};
pub use kmeans::{kmeans, kmeans_fit, snap_to_nearest, KMeansFit, KMeansOptions};
pub use random::select_random;
pub use xdnn::{xdnn_fit, XdnnStream};

/// Seed used for one class: the base seed xor the class id. Fits of a class
/// therefore do not depend on which other classes are fit alongside it.
pub fn class_seed(base_seed: u64, class_id: ClassId) -> u64 {
    base_seed ^ class_id as u64
}

/// Checks that `params` carry what `method` needs.
pub fn validate_params(method: Method, params: &SelectionParams) -> Result<()> {
    match method {
        Method::Random | Method::Kmeans | Method::KmeansNearest => {
            let budget = params.budget.ok_or_else(|| {
                Error::InvalidParameter(format!("method {method} requires a budget"))
            })?;
            budget.validate()?;
            if matches!(method, Method::Kmeans | Method::KmeansNearest) {
                if params.max_iters == 0 {
                    return Err(Error::InvalidParameter("max_iters must be positive".into()));
                }
                if params.n_init == 0 {
                    return Err(Error::InvalidParameter("n_init must be positive".into()));
                }
                if params.tol.is_nan() || params.tol < 0.0 {
                    return Err(Error::InvalidParameter("tol must be non-negative".into()));
                }
            }
        }
        Method::Elm => match params.radius {
            Some(r) if r > 0.0 && r.is_finite() => {}
            Some(r) => {
                return Err(Error::InvalidParameter(format!(
                    "radius must be positive, got {r}"
                )))
            }
            None => {
                return Err(Error::InvalidParameter(
                    "method elm requires a radius".into(),
                ))
            }
        },
        Method::Xdnn => {}
    }
    Ok(())
}

/// Fits the prototypes of one class. `seed` is used as is; callers wanting
/// the dataset-level convention pass `class_seed(base, class_id)`.
pub fn fit_class(
    class_id: ClassId,
    records: &[&EmbeddingRecord],
    method: Method,
    params: &SelectionParams,
    seed: u64,
) -> Result<Vec<Prototype>> {
    validate_params(method, params)?;
    if records.is_empty() {
        return Err(Error::EmptyBatch(class_id));
    }
    match method {
        Method::Random => select_random(class_id, records, params.budget.unwrap(), seed),
        Method::Kmeans => kmeans_fit(
            class_id,
            records,
            params.budget.unwrap(),
            seed,
            params.kmeans_options(),
        ),
        Method::KmeansNearest => {
            let centroids = kmeans_fit(
                class_id,
                records,
                params.budget.unwrap(),
                seed,
                params.kmeans_options(),
            )?;
            snap_to_nearest(&centroids, records)
        }
        Method::Xdnn => xdnn_fit(class_id, records.iter().copied()),
        Method::Elm => elm_fit(class_id, records.iter().copied(), params.radius.unwrap()),
    }
}

/// Fits prototypes for every class in `classes`, in parallel, tagging
/// failures with their class id.
pub fn fit_classes(
    classes: &BTreeMap<ClassId, Vec<&EmbeddingRecord>>,
    method: Method,
    params: &SelectionParams,
    base_seed: u64,
) -> Result<BTreeMap<ClassId, Vec<Prototype>>> {
    validate_params(method, params)?;
    let fitted: Vec<(ClassId, Result<Vec<Prototype>>)> = classes
        .par_iter()
        .map(|(&class_id, records)| {
            let seed = class_seed(base_seed, class_id);
            (class_id, fit_class(class_id, records, method, params, seed))
        })
        .collect();
    fitted
        .into_iter()
        .map(|(class_id, r)| {
            r.map(|p| (class_id, p)).map_err(|e| Error::ClassFit {
                class_id,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Fits a prototype set over every class present in `dataset`.
pub fn fit_prototypes(
    dataset: &EmbeddingDataset,
    method: Method,
    params: &SelectionParams,
    seed: u64,
) -> Result<PrototypeSet> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = split_by_class(dataset);
    let per_class = fit_classes(&classes, method, params, seed)?;
    Ok(PrototypeSet::new(
        Fingerprint::of(dataset.manifest()),
        method,
        params.clone(),
        seed,
        per_class,
    )?
    .with_class_names(dataset.manifest().class_names.clone()))
}

pub(crate) fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

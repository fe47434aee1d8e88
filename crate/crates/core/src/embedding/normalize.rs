use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, EmbeddingRecord, NormalizationMode};
use crate::error::{Error, Result};

/// Dimensions whose standard deviation falls below this pass through
/// z-scoring unscaled.
const ZSCORE_MIN_STD: f64 = 1e-12;

/// A fitted normalization map, retained so queries can be transformed the
/// same way as the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Normalizer {
    None,
    UnitL2,
    Zscore { mean: Vec<f64>, std: Vec<f64> },
}

impl Normalizer {
    pub fn mode(&self) -> NormalizationMode {
        match self {
            Normalizer::None => NormalizationMode::None,
            Normalizer::UnitL2 => NormalizationMode::UnitL2,
            Normalizer::Zscore { .. } => NormalizationMode::Zscore,
        }
    }

    /// Fits the map for `mode` on `dataset`. Only z-scoring has parameters.
    pub fn fit(dataset: &EmbeddingDataset, mode: NormalizationMode) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(match mode {
            NormalizationMode::None => Normalizer::None,
            NormalizationMode::UnitL2 => Normalizer::UnitL2,
            NormalizationMode::Zscore => {
                let d = dataset.dim();
                let n = dataset.len() as f64;
                let mut mean = vec![0.0f64; d];
                for r in dataset.records() {
                    for (m, &x) in mean.iter_mut().zip(&r.vector) {
                        *m += x as f64;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0f64; d];
                for r in dataset.records() {
                    for ((v, &x), m) in var.iter_mut().zip(&r.vector).zip(&mean) {
                        let dx = x as f64 - m;
                        *v += dx * dx;
                    }
                }
                let std = var
                    .into_iter()
                    .map(|v| {
                        let s = (v / n).sqrt();
                        if s < ZSCORE_MIN_STD {
                            1.0
                        } else {
                            s
                        }
                    })
                    .collect();
                Normalizer::Zscore { mean, std }
            }
        })
    }

    /// Applies the map to one vector. `record` is only used in error messages.
    pub fn apply_vector(&self, vector: &[f32], record: u64) -> Result<Vec<f32>> {
        match self {
            Normalizer::None => Ok(vector.to_vec()),
            Normalizer::UnitL2 => {
                let norm = vector
                    .iter()
                    .map(|&x| (x as f64) * (x as f64))
                    .sum::<f64>()
                    .sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroVector { record });
                }
                Ok(vector.iter().map(|&x| (x as f64 / norm) as f32).collect())
            }
            Normalizer::Zscore { mean, std } => {
                if vector.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        context: "z-score parameters".into(),
                        expected: mean.len(),
                        found: vector.len(),
                    });
                }
                Ok(vector
                    .iter()
                    .zip(mean.iter().zip(std))
                    .map(|(&x, (m, s))| ((x as f64 - m) / s) as f32)
                    .collect())
            }
        }
    }

    pub fn apply(&self, dataset: &EmbeddingDataset) -> Result<EmbeddingDataset> {
        let records = dataset
            .records()
            .iter()
            .map(|r| {
                Ok(EmbeddingRecord {
                    index: r.index,
                    label: r.label,
                    vector: self.apply_vector(&r.vector, r.index)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut manifest = dataset.manifest().clone();
        manifest.normalization = self.mode();
        EmbeddingDataset::new(manifest, records)
    }
}

/// Normalizes a dataset, returning the fitted map alongside the result.
pub fn normalize(
    dataset: &EmbeddingDataset,
    mode: NormalizationMode,
) -> Result<(EmbeddingDataset, Normalizer)> {
    let normalizer = Normalizer::fit(dataset, mode)?;
    let out = normalizer.apply(dataset)?;
    Ok((out, normalizer))
}

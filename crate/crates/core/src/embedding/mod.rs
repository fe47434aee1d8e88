//! Labeled embedding datasets produced by a frozen feature extractor.

mod bundle;
mod normalize;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bundle::{
    assemble, decode_bundle, encode_bundle, import_csv, load_bundle, manifest_path, parse_csv,
    save_bundle, RawBundle, BUNDLE_MAGIC, BUNDLE_VERSION,
};
pub use normalize::{normalize, Normalizer};

pub type ClassId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    None,
    UnitL2,
    Zscore,
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalizationMode::None => "none",
            NormalizationMode::UnitL2 => "unit_l2",
            NormalizationMode::Zscore => "zscore",
        })
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormalizationMode::None),
            "unit_l2" => Ok(NormalizationMode::UnitL2),
            "zscore" => Ok(NormalizationMode::Zscore),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalization mode {other:?}"
            ))),
        }
    }
}

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    /// Position in the source dataset; stable across subsetting.
    pub index: u64,
    pub label: ClassId,
    pub vector: Vec<f32>,
}

/// Describes a bundle; stored as the JSON sidecar next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub backbone_id: String,
    pub dim: usize,
    pub class_names: Vec<String>,
    pub normalization: NormalizationMode,
    pub record_count: usize,
}

impl DatasetManifest {
    /// Manifest used when a bundle has no sidecar: class names are the
    /// decimal class ids.
    pub fn synthesized(dataset_name: &str, dim: usize, labels: &[ClassId]) -> Self {
        let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        DatasetManifest {
            dataset_name: dataset_name.to_string(),
            backbone_id: "unknown".to_string(),
            dim,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            normalization: NormalizationMode::None,
            record_count: labels.len(),
        }
    }

    pub fn class_name(&self, class_id: ClassId) -> String {
        self.class_names
            .get(class_id as usize)
            .cloned()
            .unwrap_or_else(|| class_id.to_string())
    }
}

/// A validated, immutable collection of embedding records.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    manifest: DatasetManifest,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingDataset {
    pub fn new(manifest: DatasetManifest, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if manifest.dim == 0 {
            return Err(Error::Manifest("dim must be positive".into()));
        }
        if manifest.record_count != records.len() {
            return Err(Error::Manifest(format!(
                "record_count is {} but {} records are present",
                manifest.record_count,
                records.len()
            )));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != manifest.dim {
                return Err(Error::DimensionMismatch {
                    context: format!("record {i}"),
                    expected: manifest.dim,
                    found: r.vector.len(),
                });
            }
            if let Some(component) = r.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    record: i,
                    component,
                });
            }
            if r.label as usize >= manifest.class_names.len() {
                return Err(Error::LabelOutOfRange {
                    record: i,
                    label: r.label,
                    n_classes: manifest.class_names.len(),
                });
            }
            if !seen.insert(r.index) {
                return Err(Error::DuplicateIndex(r.index));
            }
        }
        Ok(EmbeddingDataset { manifest, records })
    }

    /// Builds a dataset from parallel label/vector lists, indexing records
    /// by position.
    pub fn from_rows(
        dataset_name: &str,
        labels: Vec<ClassId>,
        vectors: Vec<Vec<f32>>,
    ) -> Result<Self> {
        if labels.len() != vectors.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} vectors",
                labels.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let manifest = DatasetManifest::synthesized(dataset_name, dim, &labels);
        let records = labels
            .into_iter()
            .zip(vectors)
            .enumerate()
            .map(|(i, (label, vector))| EmbeddingRecord {
                index: i as u64,
                label,
                vector,
            })
            .collect();
        EmbeddingDataset::new(manifest, records)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (DatasetManifest, Vec<EmbeddingRecord>) {
        (self.manifest, self.records)
    }

    /// Looks up a record by its `index` field.
    pub fn record_by_index(&self, index: u64) -> Option<&EmbeddingRecord> {
        // Records loaded from a bundle are indexed by position.
        match self.records.get(index as usize) {
            Some(r) if r.index == index => Some(r),
            _ => self.records.iter().find(|r| r.index == index),
        }
    }

    /// Returns a copy with a different manifest, revalidated.
    pub fn with_manifest(self, manifest: DatasetManifest) -> Result<Self> {
        EmbeddingDataset::new(manifest, self.records)
    }
}

/// Groups records by label, preserving dataset order within each class.
pub fn split_by_class(dataset: &EmbeddingDataset) -> BTreeMap<ClassId, Vec<&EmbeddingRecord>> {
    let mut out: BTreeMap<ClassId, Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in dataset.records() {
        out.entry(r.label).or_default().push(r);
    }
    out
}

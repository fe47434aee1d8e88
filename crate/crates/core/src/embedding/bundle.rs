//! The embedding bundle format.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! 0   [u8; 8]  magic "IDEALEMB"
//! 8   u32      version (1)
//! 12  u64      n, record count
//! 20  u32      d, dimension
//! 24  n x u32  labels
//! ..  n*d f32  vectors, row-major
//! ```
//!
//! The manifest lives next to the bundle as `<bundle>.json`.

use std::path::{Path, PathBuf};

use super::{ClassId, DatasetManifest, EmbeddingDataset, EmbeddingRecord};
use crate::codec::{self, Reader};
use crate::error::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 8] = b"IDEALEMB";
pub const BUNDLE_VERSION: u32 = 1;

/// Header and payload of a bundle, before a manifest is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBundle {
    pub dim: usize,
    pub labels: Vec<ClassId>,
    pub vectors: Vec<Vec<f32>>,
}

pub fn encode_bundle(dataset: &EmbeddingDataset) -> Vec<u8> {
    let n = dataset.len();
    let d = dataset.dim();
    let mut out = Vec::with_capacity(24 + n * 4 + n * d * 4);
    out.extend_from_slice(BUNDLE_MAGIC);
    codec::put_u32(&mut out, BUNDLE_VERSION);
    codec::put_u64(&mut out, n as u64);
    codec::put_u32(&mut out, d as u32);
    for r in dataset.records() {
        codec::put_u32(&mut out, r.label);
    }
    for r in dataset.records() {
        codec::put_f32s(&mut out, &r.vector);
    }
    out
}

pub fn decode_bundle(bytes: &[u8]) -> Result<RawBundle> {
    let mut rd = Reader::new(bytes);
    rd.magic(BUNDLE_MAGIC)?;
    let version = rd.u32("version")?;
    if version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: BUNDLE_VERSION,
        });
    }
    let n = rd.u64("record count")?;
    let d = rd.u32("dimension")? as usize;
    if d == 0 {
        return Err(Error::DimensionMismatch {
            context: "bundle header".into(),
            expected: 1,
            found: 0,
        });
    }
    let n = usize::try_from(n).map_err(|_| Error::TruncatedPayload {
        what: "labels".into(),
        offset: rd.offset(),
        needed: usize::MAX,
        available: rd.remaining(),
    })?;
    let label_bytes = n.saturating_mul(4);
    rd.require(label_bytes, "labels")?;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(rd.u32("label")?);
    }
    let vector_bytes = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .unwrap_or(usize::MAX);
    rd.require(vector_bytes, "vectors")?;
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = Vec::with_capacity(d);
        for j in 0..d {
            let x = rd.f32("vector component")?;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    record: i,
                    component: j,
                });
            }
            v.push(x);
        }
        vectors.push(v);
    }
    rd.finish()?;
    Ok(RawBundle {
        dim: d,
        labels,
        vectors,
    })
}

/// Combines a decoded payload with its manifest, checking that they agree.
pub fn assemble(raw: RawBundle, manifest: DatasetManifest) -> Result<EmbeddingDataset> {
    if manifest.dim != raw.dim {
        return Err(Error::DimensionMismatch {
            context: "manifest vs bundle header".into(),
            expected: raw.dim,
            found: manifest.dim,
        });
    }
    if manifest.record_count != raw.labels.len() {
        return Err(Error::Manifest(format!(
            "record_count {} disagrees with bundle header n = {}",
            manifest.record_count,
            raw.labels.len()
        )));
    }
    let records = raw
        .labels
        .into_iter()
        .zip(raw.vectors)
        .enumerate()
        .map(|(i, (label, vector))| EmbeddingRecord {
            index: i as u64,
            label,
            vector,
        })
        .collect();
    EmbeddingDataset::new(manifest, records)
}

pub fn manifest_path(bundle: &Path) -> PathBuf {
    codec::sidecar_path(bundle)
}

/// Loads a bundle and its sidecar manifest. A missing sidecar yields a
/// synthesized manifest named after the file.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = codec::read_file(path)?;
    let raw = decode_bundle(&bytes)?;
    let sidecar = manifest_path(path);
    let manifest = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        serde_json::from_str(&text)?
    } else {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        DatasetManifest::synthesized(&name, raw.dim, &raw.labels)
    };
    assemble(raw, manifest)
}

/// Writes the bundle and its `.json` manifest.
pub fn save_bundle(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    codec::write_file(path, &encode_bundle(dataset))?;
    let mut json = serde_json::to_string_pretty(dataset.manifest())?;
    json.push('\n');
    codec::write_file(&manifest_path(path), json.as_bytes())
}

/// Parses header-less `label,v1,...,vd` rows.
pub fn parse_csv(
    text: &str,
    dataset_name: &str,
    class_names: Option<Vec<String>>,
) -> Result<EmbeddingDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut labels = Vec::new();
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let line = line + 1;
        let row = row.map_err(|e| Error::Csv {
            line,
            message: e.to_string(),
        })?;
        let mut fields = row.iter();
        let label: ClassId = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Csv {
                line,
                message: format!("label: {e}"),
            })?;
        let vector = fields
            .map(|f| {
                f.parse::<f32>().map_err(|e| Error::Csv {
                    line,
                    message: format!("value {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f32>>>()?;
        if let Some(first) = vectors.first() {
            if first.len() != vector.len() {
                return Err(Error::DimensionMismatch {
                    context: format!("csv line {line}"),
                    expected: first.len(),
                    found: vector.len(),
                });
            }
        } else if vector.is_empty() {
            return Err(Error::Csv {
                line,
                message: "row has no vector components".into(),
            });
        }
        labels.push(label);
        vectors.push(vector);
    }
    if vectors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = vectors[0].len();
    let mut manifest = DatasetManifest::synthesized(dataset_name, dim, &labels);
    if let Some(names) = class_names {
        manifest.class_names = names;
    }
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

/// Converts a CSV file to a bundle on disk.
pub fn import_csv(
    csv_path: impl AsRef<Path>,
    bundle_path: impl AsRef<Path>,
    dataset_name: &str,
    backbone_id: &str,
    class_names: Option<Vec<String>>,
) -> Result<EmbeddingDataset> {
    let csv_path = csv_path.as_ref();
    let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let dataset = parse_csv(&text, dataset_name, class_names)?;
    let (mut manifest, records) = dataset.into_parts();
    manifest.backbone_id = backbone_id.to_string();
    let dataset = EmbeddingDataset::new(manifest, records)?;
    save_bundle(&dataset, bundle_path)?;
    Ok(dataset)
}

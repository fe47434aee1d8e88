//! Prototypes, prototype sets, and the prototype file format.
//!
//! File layout (little-endian, no padding):
//!
//! ```text
//! [u8; 8] magic "IDEALPRO"
//! u32     version (1)
//! u32     d
//! u32     prototype count
//! per prototype:
//!   u32   class id
//!   u8    kind (0 = centroid, 1 = exemplar)
//!   i64   source index, -1 when absent
//!   u64   support
//!   d f32 vector
//! ```
//!
//! Prototypes are stored grouped by ascending class id; the method, its
//! parameters, the seed and the dataset fingerprint live in `<file>.json`.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Reader};
use crate::embedding::{ClassId, DatasetManifest, NormalizationMode, Normalizer};
use crate::error::{Error, Result};
use crate::selection::KMeansOptions;

pub const PROTOTYPE_MAGIC: &[u8; 8] = b"IDEALPRO";
pub const PROTOTYPE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeKind {
    /// A cluster mean; need not coincide with any training record.
    Centroid,
    /// A verbatim training record.
    Exemplar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class_id: ClassId,
    pub vector: Vec<f32>,
    pub kind: PrototypeKind,
    /// Index of the training record this prototype copies. Present iff
    /// `kind` is `Exemplar`.
    pub source_index: Option<u64>,
    /// Number of training records attributed to this prototype.
    pub support: u64,
}

impl Prototype {
    pub fn exemplar(class_id: ClassId, vector: Vec<f32>, source_index: u64, support: u64) -> Self {
        Prototype {
            class_id,
            vector,
            kind: PrototypeKind::Exemplar,
            source_index: Some(source_index),
            support,
        }
    }

    pub fn centroid(class_id: ClassId, vector: Vec<f32>, support: u64) -> Self {
        Prototype {
            class_id,
            vector,
            kind: PrototypeKind::Centroid,
            source_index: None,
            support,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Kmeans,
    KmeansNearest,
    Xdnn,
    Elm,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Random,
        Method::Kmeans,
        Method::KmeansNearest,
        Method::Xdnn,
        Method::Elm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Kmeans => "kmeans",
            Method::KmeansNearest => "kmeans_nearest",
            Method::Xdnn => "xdnn",
            Method::Elm => "elm",
        }
    }

    /// Whether every prototype the method emits starts life as a training
    /// record.
    pub fn yields_exemplars(self) -> bool {
        matches!(self, Method::Random | Method::KmeansNearest | Method::Xdnn)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Per-class prototype count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Budget {
    /// Fraction of the class size in (0, 1].
    FractionOfClass(f64),
    FixedPerClass(usize),
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Budget::FractionOfClass(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidParameter(
                format!("budget fraction {f} is outside (0, 1]"),
            )),
            Budget::FixedPerClass(0) => Err(Error::InvalidParameter(
                "per-class budget must be positive".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Number of prototypes for a class of `class_size` records.
    pub fn prototypes_for(&self, class_size: usize) -> Result<usize> {
        self.validate()?;
        let k = match *self {
            Budget::FractionOfClass(f) => ((f * class_size as f64).round() as usize).max(1),
            Budget::FixedPerClass(k) => k,
        };
        if k > class_size {
            return Err(Error::BudgetExceedsClass { k, class_size });
        }
        Ok(k)
    }
}

/// Fractions always carry a decimal point (`1.0`, `0.1`) and counts never
/// do, so the two stay distinguishable in tables.
impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::FractionOfClass(x) => write!(f, "{x:?}"),
            Budget::FixedPerClass(k) => write!(f, "{k}"),
        }
    }
}

/// Method parameters, recorded alongside the prototypes they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    pub budget: Option<Budget>,
    pub radius: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub n_init: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        let km = KMeansOptions::default();
        SelectionParams {
            budget: None,
            radius: None,
            max_iters: km.max_iters,
            tol: km.tol,
            n_init: km.n_init,
        }
    }
}

impl SelectionParams {
    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            n_init: self.n_init,
        }
    }
}

/// Identifies the embedding space a prototype set lives in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub backbone_id: String,
    pub dim: usize,
    pub normalization: NormalizationMode,
}

impl Fingerprint {
    pub fn of(manifest: &DatasetManifest) -> Self {
        Fingerprint {
            backbone_id: manifest.backbone_id.clone(),
            dim: manifest.dim,
            normalization: manifest.normalization,
        }
    }

    /// Checks that queries described by `manifest` can be compared against
    /// prototypes with this fingerprint. The normalization mode is not
    /// compared: raw queries are transformed by the set's normalizer.
    pub fn check_compatible(&self, manifest: &DatasetManifest) -> Result<()> {
        if manifest.dim != self.dim {
            return Err(Error::DimensionMismatch {
                context: "query data vs prototypes".into(),
                expected: self.dim,
                found: manifest.dim,
            });
        }
        if manifest.backbone_id != self.backbone_id {
            return Err(Error::FingerprintMismatch(format!(
                "prototypes come from backbone {:?}, data from {:?}",
                self.backbone_id, manifest.backbone_id
            )));
        }
        Ok(())
    }
}

/// The prototypes of every trained class, in a fixed global order: classes
/// ascending, then per-class list order. A prototype's position in that
/// order is its *prototype index*.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub fingerprint: Fingerprint,
    pub method: Method,
    pub params: SelectionParams,
    pub seed: u64,
    pub class_names: Vec<String>,
    /// Map applied to raw queries before comparison, when the training data
    /// was normalized by this engine.
    pub normalizer: Option<Normalizer>,
    prototypes: Vec<Prototype>,
    ranges: BTreeMap<ClassId, Range<usize>>,
}

impl PrototypeSet {
    pub fn new(
        fingerprint: Fingerprint,
        method: Method,
        params: SelectionParams,
        seed: u64,
        per_class: BTreeMap<ClassId, Vec<Prototype>>,
    ) -> Result<Self> {
        let mut prototypes = Vec::new();
        let mut ranges = BTreeMap::new();
        for (class_id, list) in per_class {
            if list.is_empty() {
                return Err(Error::ClassFit {
                    class_id,
                    source: Box::new(Error::EmptyPrototypeSet),
                });
            }
            let start = prototypes.len();
            for p in list {
                validate_prototype(&p, fingerprint.dim)?;
                if p.class_id != class_id {
                    return Err(Error::InvalidParameter(format!(
                        "prototype of class {} filed under class {class_id}",
                        p.class_id
                    )));
                }
                prototypes.push(p);
            }
            ranges.insert(class_id, start..prototypes.len());
        }
        Ok(PrototypeSet {
            fingerprint,
            method,
            params,
            seed,
            class_names: Vec::new(),
            normalizer: None,
            prototypes,
            ranges,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = names;
        self
    }

    pub fn dim(&self) -> usize {
        self.fingerprint.dim
    }

    /// All prototypes in prototype-index order.
    pub fn prototypes(&self) -> &[Prototype] {
        &self.prototypes
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.ranges.keys().copied()
    }

    pub fn contains_class(&self, class_id: ClassId) -> bool {
        self.ranges.contains_key(&class_id)
    }

    pub fn class_prototypes(&self, class_id: ClassId) -> &[Prototype] {
        self.ranges
            .get(&class_id)
            .map_or(&[][..], |r| &self.prototypes[r.clone()])
    }

    pub fn per_class(&self) -> BTreeMap<ClassId, &[Prototype]> {
        self.ranges
            .iter()
            .map(|(&c, r)| (c, &self.prototypes[r.clone()]))
            .collect()
    }

    pub fn class_name(&self, class_id: ClassId) -> String {
        self.class_names
            .get(class_id as usize)
            .cloned()
            .unwrap_or_else(|| class_id.to_string())
    }
}

fn validate_prototype(p: &Prototype, dim: usize) -> Result<()> {
    if p.vector.len() != dim {
        return Err(Error::DimensionMismatch {
            context: format!("prototype of class {}", p.class_id),
            expected: dim,
            found: p.vector.len(),
        });
    }
    if p.vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "prototype of class {} has a non-finite component",
            p.class_id
        )));
    }
    match (p.kind, p.source_index) {
        (PrototypeKind::Exemplar, None) => {
            return Err(Error::InvalidParameter(
                "exemplar prototype without a source index".into(),
            ))
        }
        (PrototypeKind::Centroid, Some(_)) => {
            return Err(Error::InvalidParameter(
                "centroid prototype with a source index".into(),
            ))
        }
        _ => {}
    }
    if p.support == 0 {
        return Err(Error::InvalidParameter(
            "prototype support must be at least 1".into(),
        ));
    }
    Ok(())
}

pub fn encode_prototypes(dim: usize, prototypes: &[Prototype]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + prototypes.len() * (25 + 4 * dim));
    out.extend_from_slice(PROTOTYPE_MAGIC);
    codec::put_u32(&mut out, PROTOTYPE_VERSION);
    codec::put_u32(&mut out, dim as u32);
    codec::put_u32(&mut out, prototypes.len() as u32);
    for p in prototypes {
        codec::put_u32(&mut out, p.class_id);
        out.push(match p.kind {
            PrototypeKind::Centroid => 0,
            PrototypeKind::Exemplar => 1,
        });
        codec::put_i64(&mut out, p.source_index.map_or(-1, |i| i as i64));
        codec::put_u64(&mut out, p.support);
        codec::put_f32s(&mut out, &p.vector);
    }
    out
}

/// Decodes a prototype file into its dimension and prototypes.
pub fn decode_prototypes(bytes: &[u8]) -> Result<(usize, Vec<Prototype>)> {
    let mut rd = Reader::new(bytes);
    rd.magic(PROTOTYPE_MAGIC)?;
    let version = rd.u32("version")?;
    if version != PROTOTYPE_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: PROTOTYPE_VERSION,
        });
    }
    let dim = rd.u32("dimension")? as usize;
    let count = rd.u32("prototype count")? as usize;
    if dim == 0 {
        return Err(Error::Corrupt {
            offset: 12,
            message: "dimension is zero".into(),
        });
    }
    let record_bytes = 21usize.saturating_add(dim.saturating_mul(4));
    rd.require(count.saturating_mul(record_bytes), "prototypes")?;
    let mut out: Vec<Prototype> = Vec::with_capacity(count);
    for i in 0..count {
        let start = rd.offset();
        let class_id = rd.u32("class id")?;
        let kind = match rd.u8("kind")? {
            0 => PrototypeKind::Centroid,
            1 => PrototypeKind::Exemplar,
            other => {
                return Err(Error::Corrupt {
                    offset: start + 4,
                    message: format!("prototype {i} has unknown kind {other}"),
                })
            }
        };
        let raw_source = rd.i64("source index")?;
        let support = rd.u64("support")?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(rd.f32("vector component")?);
        }
        let source_index = match raw_source {
            -1 => None,
            s if s >= 0 => Some(s as u64),
            s => {
                return Err(Error::Corrupt {
                    offset: start + 5,
                    message: format!("prototype {i} has source index {s}"),
                })
            }
        };
        let p = Prototype {
            class_id,
            vector,
            kind,
            source_index,
            support,
        };
        validate_prototype(&p, dim).map_err(|e| Error::Corrupt {
            offset: start,
            message: format!("prototype {i}: {e}"),
        })?;
        if let Some(prev) = out.last() {
            if prev.class_id > class_id {
                return Err(Error::Corrupt {
                    offset: start,
                    message: format!("prototype {i}: classes are not in ascending order"),
                });
            }
        }
        out.push(p);
    }
    rd.finish()?;
    Ok((dim, out))
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    method: Method,
    params: SelectionParams,
    seed: u64,
    fingerprint: Fingerprint,
    #[serde(default)]
    class_names: Vec<String>,
    #[serde(default)]
    normalizer: Option<Normalizer>,
}

/// Writes the prototype file and its `.json` sidecar.
pub fn save_prototypes(set: &PrototypeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    codec::write_file(path, &encode_prototypes(set.dim(), set.prototypes()))?;
    let sidecar = Sidecar {
        method: set.method,
        params: set.params.clone(),
        seed: set.seed,
        fingerprint: set.fingerprint.clone(),
        class_names: set.class_names.clone(),
        normalizer: set.normalizer.clone(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    codec::write_file(&codec::sidecar_path(path), json.as_bytes())
}

pub fn load_prototypes(path: impl AsRef<Path>) -> Result<PrototypeSet> {
    let path = path.as_ref();
    let (dim, prototypes) = decode_prototypes(&codec::read_file(path)?)?;
    let sidecar_path = codec::sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.fingerprint.dim != dim {
        return Err(Error::DimensionMismatch {
            context: "prototype sidecar vs file header".into(),
            expected: dim,
            found: sidecar.fingerprint.dim,
        });
    }
    let mut per_class: BTreeMap<ClassId, Vec<Prototype>> = BTreeMap::new();
    for p in prototypes {
        per_class.entry(p.class_id).or_default().push(p);
    }
    let mut set = PrototypeSet::new(
        sidecar.fingerprint,
        sidecar.method,
        sidecar.params,
        sidecar.seed,
        per_class,
    )?;
    set.class_names = sidecar.class_names;
    set.normalizer = sidecar.normalizer;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(dim: usize) -> Fingerprint {
        Fingerprint {
            backbone_id: "test".into(),
            dim,
            normalization: NormalizationMode::None,
        }
    }

    #[test]
    fn budget_rounding() {
        let b = Budget::FractionOfClass(0.1);
        assert_eq!(b.prototypes_for(5_000).unwrap(), 500);
        assert_eq!(b.prototypes_for(3).unwrap(), 1);
        assert_eq!(b.prototypes_for(15).unwrap(), 2);
        assert!(matches!(
            Budget::FixedPerClass(12).prototypes_for(5),
            Err(Error::BudgetExceedsClass {
                k: 12,
                class_size: 5
            })
        ));
        assert!(Budget::FractionOfClass(0.0).validate().is_err());
        assert!(Budget::FractionOfClass(1.5).validate().is_err());
        assert!(Budget::FixedPerClass(0).validate().is_err());
    }

    #[test]
    fn global_order_is_class_then_position() {
        let mut per_class = BTreeMap::new();
        per_class.insert(
            3,
            vec![
                Prototype::centroid(3, vec![3.0], 1),
                Prototype::centroid(3, vec![4.0], 2),
            ],
        );
        per_class.insert(1, vec![Prototype::exemplar(1, vec![1.0], 9, 1)]);
        let set = PrototypeSet::new(
            fp(1),
            Method::Random,
            SelectionParams::default(),
            0,
            per_class,
        )
        .unwrap();
        let firsts: Vec<f32> = set.prototypes().iter().map(|p| p.vector[0]).collect();
        assert_eq!(firsts, vec![1.0, 3.0, 4.0]);
        assert_eq!(set.class_prototypes(3).len(), 2);
        assert!(set.class_prototypes(2).is_empty());
    }

    #[test]
    fn decoder_rejects_inconsistent_records() {
        let good = vec![Prototype::exemplar(0, vec![1.0, 2.0], 4, 1)];
        let mut bytes = encode_prototypes(2, &good);
        assert_eq!(decode_prototypes(&bytes).unwrap().1, good);

        // Exemplar kind with source index -1.
        bytes[25..33].copy_from_slice(&(-1i64).to_le_bytes());
        assert!(matches!(
            decode_prototypes(&bytes),
            Err(Error::Corrupt { .. })
        ));

        let unsorted = vec![
            Prototype::centroid(2, vec![0.0, 0.0], 1),
            Prototype::centroid(1, vec![0.0, 0.0], 1),
        ];
        assert!(matches!(
            decode_prototypes(&encode_prototypes(2, &unsorted)),
            Err(Error::Corrupt { .. })
        ));

        let bytes = encode_prototypes(2, &good);
        assert!(matches!(
            decode_prototypes(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let mut per_class = BTreeMap::new();
        per_class.insert(0, vec![Prototype::centroid(0, vec![0.5, -0.5], 3)]);
        let mut set = PrototypeSet::new(
            fp(2),
            Method::Kmeans,
            SelectionParams {
                budget: Some(Budget::FractionOfClass(0.1)),
                ..SelectionParams::default()
            },
            7,
            per_class,
        )
        .unwrap()
        .with_class_names(vec!["ship".into()]);
        set.normalizer = Some(Normalizer::UnitL2);
        save_prototypes(&set, &path).unwrap();
        assert_eq!(load_prototypes(&path).unwrap(), set);
    }
}

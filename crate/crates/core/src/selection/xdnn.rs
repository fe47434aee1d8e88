//! Single-pass, parameter-free prototype identification driven by a
//! recursively estimated data density.
//!
//! The stream keeps the running mean `mu` of the samples, the running mean
//! `x_sq` of their squared norms and the count. The density of a point `z`
//! is `1 / (1 + |z - mu|^2 + x_sq - |mu|^2)`. A sample whose density is
//! above every prototype's or below every prototype's opens a new
//! prototype; otherwise the nearest prototype absorbs it and moves to the
//! mean of its members.

use super::to_f32;
use crate::distance::squared_l2_mixed;
use crate::embedding::{ClassId, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::prototype::Prototype;

struct Candidate {
    vector: Vec<f64>,
    source_index: Option<u64>,
    support: u64,
}

pub struct XdnnStream {
    class_id: ClassId,
    dim: Option<usize>,
    mean: Vec<f64>,
    mean_sq_norm: f64,
    count: u64,
    prototypes: Vec<Candidate>,
}

impl XdnnStream {
    pub fn new(class_id: ClassId) -> Self {
        XdnnStream {
            class_id,
            dim: None,
            mean: Vec::new(),
            mean_sq_norm: 0.0,
            count: 0,
            prototypes: Vec::new(),
        }
    }

    /// Number of samples consumed so far.
    pub fn samples_seen(&self) -> u64 {
        self.count
    }

    pub fn prototype_count(&self) -> usize {
        self.prototypes.len()
    }

    fn density(&self, z: &[f64]) -> f64 {
        let mu_sq: f64 = self.mean.iter().map(|m| m * m).sum();
        let dist_sq: f64 = z.iter().zip(&self.mean).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 / (1.0 + dist_sq + self.mean_sq_norm - mu_sq)
    }

    pub fn push(&mut self, record: &EmbeddingRecord) -> Result<()> {
        let dim = *self.dim.get_or_insert(record.vector.len());
        if record.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("record {}", record.index),
                expected: dim,
                found: record.vector.len(),
            });
        }
        let x: Vec<f64> = record.vector.iter().map(|&v| v as f64).collect();
        self.count += 1;
        let c = self.count as f64;
        if self.count == 1 {
            self.mean = x.clone();
        } else {
            for (m, &xi) in self.mean.iter_mut().zip(&x) {
                *m += (xi - *m) / c;
            }
        }
        let sq_norm: f64 = x.iter().map(|v| v * v).sum();
        self.mean_sq_norm += (sq_norm - self.mean_sq_norm) / c;

        if self.prototypes.is_empty() {
            self.open(x, record.index);
            return Ok(());
        }

        let dx = self.density(&x);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.prototypes {
            let dp = self.density(&p.vector);
            lo = lo.min(dp);
            hi = hi.max(dp);
        }
        if dx > hi || dx < lo {
            self.open(x, record.index);
            return Ok(());
        }

        let mut best = (0usize, f64::INFINITY);
        for (j, p) in self.prototypes.iter().enumerate() {
            let d = squared_l2_mixed(&record.vector, &p.vector);
            if d < best.1 {
                best = (j, d);
            }
        }
        let p = &mut self.prototypes[best.0];
        p.support += 1;
        let s = p.support as f64;
        for (v, &xi) in p.vector.iter_mut().zip(&x) {
            *v += (xi - *v) / s;
        }
        p.source_index = None;
        Ok(())
    }

    fn open(&mut self, x: Vec<f64>, source_index: u64) {
        self.prototypes.push(Candidate {
            vector: x,
            source_index: Some(source_index),
            support: 1,
        });
    }

    /// Prototypes in creation order. Those that never absorbed a sample are
    /// exemplars; the rest are centroids.
    pub fn finish(self) -> Result<Vec<Prototype>> {
        if self.count == 0 {
            return Err(Error::EmptyBatch(self.class_id));
        }
        let class_id = self.class_id;
        Ok(self
            .prototypes
            .into_iter()
            .map(|p| match p.source_index {
                Some(idx) => Prototype::exemplar(class_id, to_f32(&p.vector), idx, p.support),
                None => Prototype::centroid(class_id, to_f32(&p.vector), p.support),
            })
            .collect())
    }
}

/// Runs the stream over `records` once, in order.
pub fn xdnn_fit<'a>(
    class_id: ClassId,
    records: impl IntoIterator<Item = &'a EmbeddingRecord>,
) -> Result<Vec<Prototype>> {
    let mut stream = XdnnStream::new(class_id);
    for r in records {
        stream.push(r)?;
    }
    stream.finish()
}

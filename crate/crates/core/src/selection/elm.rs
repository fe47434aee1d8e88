//! Evolving local means: online radius-based clustering.

use super::to_f32;
use crate::distance::squared_l2_mixed;
use crate::embedding::{ClassId, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::prototype::Prototype;

pub struct ElmStream {
    class_id: ClassId,
    radius: f64,
    dim: Option<usize>,
    means: Vec<Vec<f64>>,
    support: Vec<u64>,
    seen: u64,
}

impl ElmStream {
    pub fn new(class_id: ClassId, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(ElmStream {
            class_id,
            radius,
            dim: None,
            means: Vec::new(),
            support: Vec::new(),
            seen: 0,
        })
    }

    pub fn samples_seen(&self) -> u64 {
        self.seen
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
        self.seen += 1;
        let mut best: Option<(usize, f64)> = None;
        for (j, m) in self.means.iter().enumerate() {
            let d = squared_l2_mixed(&record.vector, m);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d2)) if d2.sqrt() <= self.radius => {
                self.support[j] += 1;
                let n = self.support[j] as f64;
                for (m, &x) in self.means[j].iter_mut().zip(&record.vector) {
                    *m += (x as f64 - *m) / n;
                }
            }
            _ => {
                self.means
                    .push(record.vector.iter().map(|&x| x as f64).collect());
                self.support.push(1);
            }
        }
        Ok(())
    }

    /// Cluster means in creation order, as centroid prototypes.
    pub fn finish(self) -> Result<Vec<Prototype>> {
        if self.seen == 0 {
            return Err(Error::EmptyBatch(self.class_id));
        }
        let class_id = self.class_id;
        Ok(self
            .means
            .iter()
            .zip(self.support)
            .map(|(m, s)| Prototype::centroid(class_id, to_f32(m), s))
            .collect())
    }
}

pub fn elm_fit<'a>(
    class_id: ClassId,
    records: impl IntoIterator<Item = &'a EmbeddingRecord>,
    radius: f64,
) -> Result<Vec<Prototype>> {
    let mut stream = ElmStream::new(class_id, radius)?;
    for r in records {
        stream.push(r)?;
    }
    stream.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn recs(points: &[Vec<f32>]) -> Vec<EmbeddingRecord> {
        points
            .iter()
            .enumerate()
            .map(|(i, v)| EmbeddingRecord {
                index: i as u64,
                label: 0,
                vector: v.clone(),
            })
            .collect()
    }

    #[test]
    fn large_radius_merges_everything() {
        let r = recs(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 2.0],
        ]);
        let p = elm_fit(0, r.iter(), 100.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].vector, vec![1.0, 1.0]);
        assert_eq!(p[0].support, 4);
    }

    #[test]
    fn small_radius_keeps_every_sample() {
        let r = recs(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 2.0],
        ]);
        let p = elm_fit(0, r.iter(), 0.5).unwrap();
        assert_eq!(p.len(), 4);
        for (proto, rec) in p.iter().zip(&r) {
            assert_eq!(proto.vector, rec.vector);
            assert_eq!(proto.support, 1);
        }
    }

    #[test]
    fn two_blobs_give_two_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sigma = 0.1f32;
        let noise = Normal::new(0.0f32, sigma).unwrap();
        let centers = [vec![0.0f32; 4], vec![10.0f32; 4]];
        let n_per = 400;
        let points: Vec<Vec<f32>> = (0..2 * n_per)
            .map(|i| {
                centers[i % 2]
                    .iter()
                    .map(|&c| c + noise.sample(&mut rng))
                    .collect()
            })
            .collect();
        let r = recs(&points);
        // Within-blob distances stay under ~1.2; blobs are 20 apart.
        let p = elm_fit(0, r.iter(), 3.0).unwrap();
        assert_eq!(p.len(), 2);
        let bound = 3.0 * sigma as f64 / (n_per as f64).sqrt();
        for (proto, center) in p.iter().zip(&centers) {
            for (&m, &c) in proto.vector.iter().zip(center) {
                assert!((m as f64 - c as f64).abs() < bound, "{m} vs {c}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let r = recs(&[vec![0.0]]);
        assert!(elm_fit(0, r.iter(), 0.0).is_err());
        assert!(elm_fit(0, r.iter(), -2.0).is_err());
        assert!(matches!(
            elm_fit(1, std::iter::empty(), 1.0),
            Err(Error::EmptyBatch(1))
        ));
    }

    proptest! {
        #[test]
        fn means_are_member_averages(
            points in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 3), 1..60),
            radius in 0.05f64..2.0,
        ) {
            let r = recs(&points);
            let mut stream = ElmStream::new(0, radius).unwrap();
            // Replay the assignment to recover cluster members.
            let mut members: Vec<Vec<usize>> = Vec::new();
            let mut means: Vec<Vec<f64>> = Vec::new();
            for (i, rec) in r.iter().enumerate() {
                stream.push(rec).unwrap();
                let nearest = means
                    .iter()
                    .enumerate()
                    .map(|(j, m)| (j, squared_l2_mixed(&rec.vector, m)))
                    .fold(None, |acc: Option<(usize, f64)>, (j, d)| match acc {
                        Some((_, bd)) if bd <= d => acc,
                        _ => Some((j, d)),
                    });
                match nearest {
                    Some((j, d)) if d.sqrt() <= radius => {
                        members[j].push(i);
                        let n = members[j].len() as f64;
                        for (m, &x) in means[j].iter_mut().zip(&rec.vector) {
                            *m += (x as f64 - *m) / n;
                        }
                    }
                    _ => {
                        members.push(vec![i]);
                        means.push(rec.vector.iter().map(|&x| x as f64).collect());
                    }
                }
            }
            prop_assert_eq!(stream.samples_seen(), r.len() as u64);
            let protos = stream.finish().unwrap();
            prop_assert!(protos.len() <= r.len());
            prop_assert_eq!(protos.len(), members.len());
            for (p, m) in protos.iter().zip(&members) {
                prop_assert_eq!(p.support, m.len() as u64);
                for (j, &v) in p.vector.iter().enumerate() {
                    let avg = m.iter().map(|&i| points[i][j] as f64).sum::<f64>() / m.len() as f64;
                    prop_assert!((v as f64 - avg).abs() <= 1e-6);
                }
            }
        }
    }
}

//! Seeded Gaussian-blob datasets for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::EmbeddingDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Minimum distance between class centers, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

/// Class centers at least `separation * sigma` apart. With `classes <= dim`
/// they sit on scaled coordinate axes, exactly that far apart.
pub fn blob_centers(spec: &BlobSpec) -> Vec<Vec<f64>> {
    let gap = spec.separation * spec.sigma;
    if spec.classes <= spec.dim {
        let scale = gap / std::f64::consts::SQRT_2;
        return (0..spec.classes)
            .map(|c| {
                let mut v = vec![0.0; spec.dim];
                v[c] = scale;
                v
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xC3A5_C85C_97CB_3127);
    let half = gap * spec.classes as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    while centers.len() < spec.classes {
        let c: Vec<f64> = (0..spec.dim)
            .map(|_| rng.random_range(-half..half))
            .collect();
        let far_enough = centers.iter().all(|o| {
            o.iter()
                .zip(&c)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= gap
        });
        if far_enough {
            centers.push(c);
        }
    }
    centers
}

/// `per_class` samples per class, interleaved by class (record `i` has
/// label `i % classes`).
pub fn gaussian_blobs(spec: &BlobSpec) -> EmbeddingDataset {
    let centers = blob_centers(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma must be finite and non-negative");
    let n = spec.classes * spec.per_class;
    let mut labels = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % spec.classes;
        labels.push(c as u32);
        vectors.push(
            centers[c]
                .iter()
                .map(|&m| (m + noise.sample(&mut rng)) as f32)
                .collect(),
        );
    }
    EmbeddingDataset::from_rows(&format!("blobs-{}", spec.seed), labels, vectors)
        .expect("generated blobs are valid")
}

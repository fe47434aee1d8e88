//! Lloyd's k-means with k-means++ seeding, and snapping centroids to the
//! nearest real records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::to_f32;
use crate::distance::{squared_l2, squared_l2_mixed};
use crate::embedding::{ClassId, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::prototype::{Budget, Prototype};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    /// Stop once the relative inertia improvement of an iteration drops
    /// below this.
    pub tol: f64,
    /// Independent seedings; the run with the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iters: 300,
            tol: 1e-4,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster of each input point.
    pub assignment: Vec<usize>,
    /// Inertia after seeding and after every accepted iteration.
    /// Non-increasing.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Positions (into the fitted point list) of each cluster's members.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &a) in self.assignment.iter().enumerate() {
            out[a].push(i);
        }
        out
    }
}

/// Clusters `points` into `k` groups.
pub fn kmeans(points: &[&[f32]], k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if opts.n_init == 0 {
        return Err(Error::InvalidParameter("n_init must be positive".into()));
    }
    if k > points.len() {
        return Err(Error::BudgetExceedsClass {
            k,
            class_size: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lloyd(points, k, &mut rng, &opts);
    for _ in 1..opts.n_init {
        let fit = lloyd(points, k, &mut rng, &opts);
        if fit.inertia() < best.inertia() {
            best = fit;
        }
    }
    Ok(best)
}

fn lloyd(points: &[&[f32]], k: usize, rng: &mut ChaCha8Rng, opts: &KMeansOptions) -> KMeansFit {
    let mut centroids = plus_plus_seeds(points, k, rng);
    let (mut assignment, mut inertia) = assign(points, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let mut next_assignment = assignment.clone();
        repair_empty_clusters(points, &centroids, &mut next_assignment, k);
        let next_centroids = means(points, &next_assignment, k);
        let (next_assignment, next_inertia) = assign(points, &next_centroids);
        if next_inertia > inertia {
            // Rounding noise at a fixed point.
            break;
        }
        iterations += 1;
        let improvement = if inertia > 0.0 {
            (inertia - next_inertia) / inertia
        } else {
            0.0
        };
        centroids = next_centroids;
        assignment = next_assignment;
        inertia = next_inertia;
        history.push(inertia);
        if improvement < opts.tol {
            break;
        }
    }

    // Leave no cluster without members.
    let sizes = cluster_sizes(&assignment, k);
    if sizes.contains(&0) {
        repair_empty_clusters(points, &centroids, &mut assignment, k);
        centroids = means(points, &assignment, k);
        let repaired: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &a)| squared_l2_mixed(p, &centroids[a]))
            .sum();
        history.push(repaired);
    }

    KMeansFit {
        centroids,
        assignment,
        inertia_history: history,
        iterations,
    }
}

/// k-means over one class, returning centroid prototypes whose support is
/// the cluster size.
pub fn kmeans_fit(
    class_id: ClassId,
    records: &[&EmbeddingRecord],
    budget: Budget,
    seed: u64,
    opts: KMeansOptions,
) -> Result<Vec<Prototype>> {
    if records.is_empty() {
        return Err(Error::EmptyBatch(class_id));
    }
    let k = budget.prototypes_for(records.len())?;
    let points: Vec<&[f32]> = records.iter().map(|r| r.vector.as_slice()).collect();
    let fit = kmeans(&points, k, seed, opts)?;
    let sizes = fit.cluster_sizes();
    Ok(fit
        .centroids
        .iter()
        .zip(sizes)
        .map(|(c, n)| Prototype::centroid(class_id, to_f32(c), n as u64))
        .collect())
}

/// Replaces each centroid with the nearest class record not already claimed
/// by an earlier centroid.
pub fn snap_to_nearest(
    centroids: &[Prototype],
    records: &[&EmbeddingRecord],
) -> Result<Vec<Prototype>> {
    if centroids.is_empty() {
        return Err(Error::EmptyPrototypeSet);
    }
    if records.is_empty() {
        return Err(Error::EmptyBatch(centroids[0].class_id));
    }
    if centroids.len() > records.len() {
        return Err(Error::BudgetExceedsClass {
            k: centroids.len(),
            class_size: records.len(),
        });
    }
    let mut claimed = vec![false; records.len()];
    let mut out = Vec::with_capacity(centroids.len());
    for c in centroids {
        let mut best: Option<(f64, usize)> = None;
        for (i, r) in records.iter().enumerate() {
            if claimed[i] {
                continue;
            }
            let d = squared_l2(&r.vector, &c.vector);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("fewer centroids than records");
        claimed[i] = true;
        let r = records[i];
        out.push(Prototype::exemplar(
            c.class_id,
            r.vector.clone(),
            r.index,
            c.support,
        ));
    }
    Ok(out)
}

/// Greedy k-means++: each new seed is the best of a few D²-weighted
/// candidates, judged by the potential it leaves behind.
fn plus_plus_seeds(points: &[&[f32]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let to_f64 = |p: &[f32]| p.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![to_f64(points[first])];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_l2(p, points[first]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut best: Option<(f64, usize, Vec<f64>)> = None;
            for _ in 0..trials {
                let c = sample_weighted(&d2, rng.random::<f64>() * total);
                let after: Vec<f64> = d2
                    .iter()
                    .zip(points)
                    .map(|(&w, p)| w.min(squared_l2(p, points[c])))
                    .collect();
                let potential: f64 = after.iter().sum();
                if best.as_ref().is_none_or(|(bp, _, _)| potential < *bp) {
                    best = Some((potential, c, after));
                }
            }
            let (_, c, after) = best.unwrap();
            d2 = after;
            c
        } else {
            // Only duplicates of existing seeds remain.
            (0..n).find(|&i| !chosen[i]).unwrap()
        };
        chosen[pick] = true;
        centroids.push(to_f64(points[pick]));
    }
    centroids
}

/// Index whose cumulative weight first exceeds `target`, skipping zero
/// weights.
fn sample_weighted(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut pick = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        pick = Some(i);
        if acc > target {
            break;
        }
    }
    pick.expect("weights have a positive entry")
}

fn assign(points: &[&[f32]], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignment = points
        .iter()
        .map(|p| {
            let (j, d) = nearest(p, centroids);
            inertia += d;
            j
        })
        .collect();
    (assignment, inertia)
}

fn nearest(p: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_l2_mixed(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn cluster_sizes(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes
}

/// Moves, for every empty cluster, the point farthest from its assigned
/// centroid into that cluster.
fn repair_empty_clusters(
    points: &[&[f32]],
    centroids: &[Vec<f64>],
    assignment: &mut [usize],
    k: usize,
) {
    let mut sizes = cluster_sizes(assignment, k);
    for empty in 0..k {
        if sizes[empty] != 0 {
            continue;
        }
        let mut far: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = squared_l2_mixed(p, &centroids[a]);
            if far.is_none_or(|(fd, _)| d > fd) {
                far = Some((d, i));
            }
        }
        // k <= n guarantees a donor cluster with at least two members.
        let (_, i) = far.unwrap();
        sizes[assignment[i]] -= 1;
        assignment[i] = empty;
        sizes[empty] = 1;
    }
}

fn means(points: &[&[f32]], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
            *s += x as f64;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

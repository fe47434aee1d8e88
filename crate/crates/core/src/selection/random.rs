use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{ClassId, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::prototype::{Budget, Prototype};

/// Samples `k` distinct records of the class uniformly without replacement.
pub fn select_random(
    class_id: ClassId,
    records: &[&EmbeddingRecord],
    budget: Budget,
    seed: u64,
) -> Result<Vec<Prototype>> {
    if records.is_empty() {
        return Err(Error::EmptyBatch(class_id));
    }
    let k = budget.prototypes_for(records.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, records.len(), k)
        .into_iter()
        .map(|i| {
            let r = records[i];
            Prototype::exemplar(class_id, r.vector.clone(), r.index, 1)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn records(n: usize) -> Vec<EmbeddingRecord> {
        (0..n)
            .map(|i| EmbeddingRecord {
                index: i as u64 * 3,
                label: 0,
                vector: vec![i as f32],
            })
            .collect()
    }

    #[test]
    fn exhaustive_budget_takes_everything() {
        let recs = records(3);
        let refs: Vec<_> = recs.iter().collect();
        let protos = select_random(0, &refs, Budget::FixedPerClass(3), 1).unwrap();
        let idx: BTreeSet<u64> = protos.iter().filter_map(|p| p.source_index).collect();
        assert_eq!(idx, BTreeSet::from([0, 3, 6]));
        assert!(protos.iter().all(|p| p.support == 1));
    }

    #[test]
    fn ten_percent_of_five_thousand() {
        let recs = records(5_000);
        let refs: Vec<_> = recs.iter().collect();
        let protos = select_random(0, &refs, Budget::FractionOfClass(0.1), 7).unwrap();
        assert_eq!(protos.len(), 500);
        let distinct: BTreeSet<u64> = protos.iter().filter_map(|p| p.source_index).collect();
        assert_eq!(distinct.len(), 500);
    }

    #[test]
    fn seeded_runs_agree() {
        let recs = records(100);
        let refs: Vec<_> = recs.iter().collect();
        let a = select_random(0, &refs, Budget::FixedPerClass(10), 5).unwrap();
        let b = select_random(0, &refs, Budget::FixedPerClass(10), 5).unwrap();
        let c = select_random(0, &refs, Budget::FixedPerClass(10), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn budget_larger_than_class() {
        let recs = records(2);
        let refs: Vec<_> = recs.iter().collect();
        assert!(matches!(
            select_random(0, &refs, Budget::FixedPerClass(3), 0),
            Err(Error::BudgetExceedsClass { .. })
        ));
    }
}

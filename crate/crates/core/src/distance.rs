//! Euclidean distances over `f32` storage with `f64` accumulation.

use crate::error::{Error, Result};

#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[inline]
pub(crate) fn squared_l2_mixed(a: &[f32], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

/// Euclidean distance between a query and a prototype vector.
pub fn distance(query: &[f32], prototype: &[f32]) -> Result<f64> {
    if query.len() != prototype.len() {
        return Err(Error::DimensionMismatch {
            context: "distance".into(),
            expected: prototype.len(),
            found: query.len(),
        });
    }
    Ok(squared_l2(query, prototype).sqrt())
}

//! Deterministic reductions.
//!
//! All energy integrals reduce through [`pairwise_sum`], a fixed binary tree
//! over the input order. Per-node terms may be produced in parallel; the
//! reduction itself never depends on the worker count.

const LEAF: usize = 8;

/// Sums `values` along a fixed pairwise tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Weighted pairwise sum `Σ w_i v_i`.
pub fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let products: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    pairwise_sum(&products)
}

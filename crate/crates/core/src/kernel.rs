//! Pairwise exponential sums over a set of vectors.
//!
//! Both the Lemma-1 left-hand side and the exact mixture chi-square reduce to
//! `ln sum_{i,j} exp(lw_i + lw_j + scale * <v_i, v_j>)`. The sum is taken
//! with a fixed shift `2 * max_i (lw_i + scale * |v_i|^2 / 2)`, which bounds
//! every exponent by Cauchy-Schwarz and is attained on the diagonal, so a
//! single pass suffices and the shifted sum is at least one.

use crate::par;
use crate::stats::{dot, NeumaierSum};

/// `ln sum_{i,j} exp(lw_i + lw_j + scale * <v_i, v_j>)`.
///
/// `vectors` holds `log_weights.len()` contiguous vectors of length `dim`.
/// `scale` must be nonnegative. Rows are summed independently (upper
/// triangle doubled) and combined in index order.
pub fn pairwise_log_sum_exp(vectors: &[f64], dim: usize, scale: f64, log_weights: &[f64]) -> f64 {
    let k = log_weights.len();
    assert_eq!(vectors.len(), k * dim, "vector storage does not match dim");
    assert!(scale >= 0.0, "scale must be nonnegative");
    if k == 0 {
        return f64::NEG_INFINITY;
    }
    let vec_at = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let half_sq: Vec<f64> = (0..k)
        .map(|i| {
            let v = vec_at(i);
            0.5 * scale * dot(v, v)
        })
        .collect();
    let shift = 2.0
        * half_sq
            .iter()
            .zip(log_weights)
            .map(|(h, w)| h + w)
            .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }

    let rows = par::map_range(k, |i| {
        let vi = vec_at(i);
        let wi = log_weights[i];
        let base = wi - shift;
        let mut acc = NeumaierSum::default();
        // Plain sums over short blocks, compensated across blocks.
        let mut j = i + 1;
        while j < k {
            let end = (j + 256).min(k);
            let block: f64 = (j..end)
                .map(|t| (base + log_weights[t] + scale * dot(vi, vec_at(t))).exp())
                .sum();
            acc.add(block);
            j = end;
        }
        let diag = (2.0 * (wi + half_sq[i]) - shift).exp();
        2.0 * acc.total() + diag
    });
    let mut total = NeumaierSum::default();
    for r in rows {
        total.add(r);
    }
    shift + total.total().ln()
}

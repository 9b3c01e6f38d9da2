//! The non-rotary baselines: ALiBi's additive bias, the fixed sinusoidal
//! absolute embedding, and (implicitly) no-PE.

use super::config::EncodingError;

/// Additive attention bias `−slope·(m − n)` for a causal query/key pair.
pub fn alibi_bias(slope: f64, m: usize, n: usize) -> Result<f64, EncodingError> {
    if m < n {
        return Err(EncodingError::NonCausalBias { query_pos: m, key_pos: n });
    }
    Ok(-slope * (m - n) as f64)
}

/// Geometric slope schedule `2^(−8i/H)` for head `i` of `H`.
pub fn alibi_slopes(n_heads: usize) -> Vec<f64> {
    assert!(n_heads >= 1);
    (0..n_heads)
        .map(|i| 2f64.powf(-8.0 * i as f64 / n_heads as f64))
        .collect()
}

/// Fixed absolute position embedding: interleaved (sin, cos) pairs at
/// frequencies `base^(−2i/d)`.
pub fn sinusoidal_embedding(pos: usize, d: usize, base: f64) -> Result<Vec<f64>, EncodingError> {
    if d < 2 || d % 2 != 0 {
        return Err(EncodingError::BadHeadDim { head_dim: d });
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let freq = base.powf(-2.0 * i as f64 / d as f64);
        let angle = pos as f64 * freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn zero_distance_zero_bias() {
        assert_eq!(alibi_bias(0.7, 5, 5).unwrap(), 0.0);
    }

    #[test]
    fn bias_is_linear_in_distance() {
        assert_eq!(alibi_bias(0.5, 7, 4).unwrap(), -1.5);
    }

    #[test]
    fn bias_rejects_non_causal_pairs() {
        assert!(matches!(
            alibi_bias(0.5, 3, 4),
            Err(EncodingError::NonCausalBias { .. })
        ));
    }

    #[test]
    fn twelve_head_slopes_form_a_geometric_sequence() {
        let slopes = alibi_slopes(12);
        assert_eq!(slopes.len(), 12);
        assert!(slopes[0] > slopes[11]);
        let ratio = slopes[1] / slopes[0];
        for w in slopes.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() <= 1e-12);
        }
        assert!((ratio - 2f64.powf(-8.0 / 12.0)).abs() <= 1e-15);
    }

    #[test]
    fn embedding_at_origin_alternates_zero_one() {
        let e = sinusoidal_embedding(0, 8, 10_000.0).unwrap();
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn embedding_components_are_bounded() {
        for pos in [1, 17, 4095] {
            for v in sinusoidal_embedding(pos, 32, 10_000.0).unwrap() {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn positions_up_to_4096_get_distinct_embeddings() {
        // Exhaustive distinctness via exact bit patterns.
        let mut seen = HashSet::new();
        for pos in 0..=4096usize {
            let e = sinusoidal_embedding(pos, 64, 10_000.0).unwrap();
            let bits: Vec<u64> = e.iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(bits), "position {pos} collided");
        }
    }
}

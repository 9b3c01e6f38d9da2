//! Positional encoders behind one interface: hyperbolic rotary (HoPE),
//! circular rotary (RoPE), ALiBi, fixed sinusoidal, and no-PE.

pub mod config;
pub mod discrimination;
pub mod hope;
pub mod rope;
pub mod simple;
pub mod unified;

pub use config::{
    frequency_schedule, EncodingConfig, EncodingError, FrequencySchedule, ScorePath, Variant,
};
pub use discrimination::{brute_force_argmax, discrimination_construct_key};
pub use hope::{
    check_factored_range, factored_accurate, hope_blocks, hope_pair_score_table, hope_row_map,
    hope_scales, hope_score_fused, hope_transform_key, hope_transform_query, Role,
    FACTORED_CONDITIONING_CAP,
};
pub use rope::{rope_row_map, rope_transform};
pub use simple::{alibi_bias, alibi_slopes, sinusoidal_embedding};
pub use unified::unified_transform;

use crate::numerics::RowBlockMap;

/// The behavioral contract every variant realizes: a position-dependent
/// query transform, key transform, and additive score bias.
pub trait PositionalEncoder {
    fn transform_query(&self, x: &[f64], m: usize) -> Result<Vec<f64>, EncodingError>;
    fn transform_key(&self, x: &[f64], n: usize) -> Result<Vec<f64>, EncodingError>;
    fn score_bias(&self, m: usize, n: usize) -> Result<f64, EncodingError>;
}

/// A validated, ready-to-use encoder with its frequency schedule cached.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncodingConfig,
    thetas: Vec<f64>,
    alibi_slope: f64,
}

impl Encoder {
    /// Single-encoder construction; ALiBi gets the head-0 slope.
    pub fn from_config(config: &EncodingConfig) -> Result<Self, EncodingError> {
        Self::for_head(config, 0, 1)
    }

    /// Per-head construction: head `head` of `n_heads` (only the ALiBi slope
    /// depends on the head index).
    pub fn for_head(
        config: &EncodingConfig,
        head: usize,
        n_heads: usize,
    ) -> Result<Self, EncodingError> {
        config.validate()?;
        assert!(head < n_heads, "head index out of range");
        let thetas = frequency_schedule(config)?.thetas().to_vec();
        let alibi_slope = alibi_slopes(n_heads)[head];
        Ok(Self { config: config.clone(), thetas, alibi_slope })
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn alibi_slope(&self) -> f64 {
        self.alibi_slope
    }

    /// Raw pairwise score ⟨transform_query(q, m), transform_key(k, n)⟩
    /// evaluated the numerically appropriate way per variant (no attention
    /// scale, no bias).
    pub fn relative_score(&self, q: &[f64], k: &[f64], m: usize, n: usize) -> f64 {
        match self.config.variant {
            Variant::Hope => hope::hope_score_fused_with(
                q,
                k,
                m as i64 - n as i64,
                &self.thetas,
                self.config.theta_prime,
            ),
            Variant::Rope => rope::rope_relative_score(q, k, m as i64, n as i64, &self.thetas),
            Variant::Alibi | Variant::Sinusoidal | Variant::Nope => {
                crate::numerics::tensor::dot(q, k)
            }
        }
    }

    /// Per-row linear map over a run of positions for the factored path;
    /// `None` for variants whose transforms are the identity.
    pub fn row_map(
        &self,
        positions: &[usize],
        role: Role,
    ) -> Result<Option<RowBlockMap>, EncodingError> {
        match self.config.variant {
            Variant::Hope => Ok(Some(hope_row_map(&self.config, positions, role)?)),
            Variant::Rope => Ok(Some(rope_row_map(&self.config, positions)?)),
            Variant::Alibi | Variant::Sinusoidal | Variant::Nope => Ok(None),
        }
    }

    /// Whether the factored path stays in range for every position < `len`.
    pub fn factored_in_range(&self, len: usize) -> bool {
        match self.config.variant {
            Variant::Hope => {
                len == 0 || check_factored_range(&self.config, len - 1).is_ok()
            }
            _ => true,
        }
    }
}

impl PositionalEncoder for Encoder {
    fn transform_query(&self, x: &[f64], m: usize) -> Result<Vec<f64>, EncodingError> {
        match self.config.variant {
            Variant::Hope => hope_transform_query(x, m, &self.config),
            Variant::Rope => rope_transform(x, m, &self.config),
            Variant::Alibi | Variant::Sinusoidal | Variant::Nope => Ok(x.to_vec()),
        }
    }

    fn transform_key(&self, x: &[f64], n: usize) -> Result<Vec<f64>, EncodingError> {
        match self.config.variant {
            Variant::Hope => hope_transform_key(x, n, &self.config),
            Variant::Rope => rope_transform(x, n, &self.config),
            Variant::Alibi | Variant::Sinusoidal | Variant::Nope => Ok(x.to_vec()),
        }
    }

    fn score_bias(&self, m: usize, n: usize) -> Result<f64, EncodingError> {
        match self.config.variant {
            Variant::Alibi => alibi_bias(self.alibi_slope, m, n),
            _ => Ok(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    /// Soft-damped hope config whose exponential channels both stay well
    /// inside f64 range for positions up to ~1500, so transform-route
    /// scores verify to tight tolerances.
    fn soft_hope(d: usize) -> EncodingConfig {
        EncodingConfig { freq_scale: 0.01, theta_prime: 0.011, ..EncodingConfig::hope(d) }
    }

    /// Relative-shift contract: score(m, n) == score(m+t, n+t).
    #[test]
    fn rotary_variants_satisfy_the_relative_contract() {
        for cfg in [soft_hope(8), EncodingConfig::rope(8)] {
            let enc = Encoder::from_config(&cfg).unwrap();
            let mut rng = RngState::new(31);
            for trial in 0..200 {
                let q: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
                let k: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
                let n = (trial * 13) % 512;
                let m = n + trial % 64;
                let t = (trial * 7) % 257;
                let base = score_via_transforms(&enc, &q, &k, m, n);
                let shifted = score_via_transforms(&enc, &q, &k, m + t, n + t);
                assert!(
                    (base - shifted).abs() <= 1e-10 * 1.0f64.max(base.abs()),
                    "{:?} m={m} n={n} t={t}: {base} vs {shifted}",
                    cfg.variant
                );
            }
        }
    }

    fn score_via_transforms(enc: &Encoder, q: &[f64], k: &[f64], m: usize, n: usize) -> f64 {
        let tq = enc.transform_query(q, m).unwrap();
        let tk = enc.transform_key(k, n).unwrap();
        crate::numerics::tensor::dot(&tq, &tk)
    }

    #[test]
    fn relative_score_matches_transform_dot() {
        for cfg in [soft_hope(8), EncodingConfig::rope(8), EncodingConfig::nope(8)] {
            let enc = Encoder::from_config(&cfg).unwrap();
            let mut rng = RngState::new(77);
            for trial in 0..40 {
                let q: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
                let k: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
                let (m, n) = ((trial * 5) % 200, (trial * 9) % 200);
                let via = score_via_transforms(&enc, &q, &k, m, n);
                let direct = enc.relative_score(&q, &k, m, n);
                assert!(
                    (via - direct).abs() <= 1e-9 * 1.0f64.max(via.abs()),
                    "{:?}",
                    cfg.variant
                );
            }
        }
    }

    #[test]
    fn decay_bound_holds_for_d2_hope() {
        // |score(δ)| <= ||q~|| ||k~|| e^{−δ(θ′−θ)}, tight on (1,1)/√2.
        let cfg = EncodingConfig {
            freq_scale: 0.01,
            theta_prime: 0.012,
            ..EncodingConfig::hope(2)
        };
        let enc = Encoder::from_config(&cfg).unwrap();
        let mut rng = RngState::new(6);
        let margin = cfg.theta_prime - cfg.freq_scale;
        for _ in 0..20 {
            let q: Vec<f64> = (0..2).map(|_| rng.next_gaussian()).collect();
            let k: Vec<f64> = (0..2).map(|_| rng.next_gaussian()).collect();
            let nq = (q[0] * q[0] + q[1] * q[1]).sqrt();
            let nk = (k[0] * k[0] + k[1] * k[1]).sqrt();
            for delta in [0usize, 1, 5, 50, 500, 2000] {
                let s = enc.relative_score(&q, &k, delta, 0).abs();
                let bound = nq * nk * (-(delta as f64) * margin).exp();
                assert!(s <= bound + 1e-12, "delta {delta}: {s} > {bound}");
            }
        }
        // Equality on the eigenvector.
        let e = std::f64::consts::FRAC_1_SQRT_2;
        let v = [e, e];
        for delta in [0usize, 100, 1000] {
            let s = enc.relative_score(&v, &v, delta, 0);
            let bound = (-(delta as f64) * margin).exp();
            assert!((s - bound).abs() <= 1e-9 * bound.max(1e-300));
        }
    }

    #[test]
    fn alibi_encoder_bias_uses_head_slope() {
        let cfg = EncodingConfig::alibi(4);
        let head2 = Encoder::for_head(&cfg, 2, 12).unwrap();
        let want = -alibi_slopes(12)[2] * 5.0;
        assert_eq!(head2.score_bias(9, 4).unwrap(), want);
        let nope = Encoder::from_config(&EncodingConfig::nope(4)).unwrap();
        assert_eq!(nope.score_bias(9, 4).unwrap(), 0.0);
    }
}

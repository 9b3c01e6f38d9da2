//! Circular rotary encoding: per-pair rotation by pos·θ_i, identical for
//! queries and keys. Orthogonal, so norms are preserved and the score
//! depends on the relative offset only.

use crate::numerics::RowBlockMap;

use super::config::{frequency_schedule, EncodingConfig, EncodingError, Variant};

/// Rotate each 2D pair of `x` by `pos·θ_i`.
pub fn rope_transform(
    x: &[f64],
    pos: usize,
    config: &EncodingConfig,
) -> Result<Vec<f64>, EncodingError> {
    if config.variant != Variant::Rope {
        return Err(EncodingError::WrongVariant { expected: Variant::Rope, got: config.variant });
    }
    let thetas = frequency_schedule(config)?.thetas().to_vec();
    let mut out = x.to_vec();
    rotate_pairs(&mut out, &thetas, pos as f64);
    Ok(out)
}

pub(crate) fn rotate_pairs(x: &mut [f64], thetas: &[f64], pos: f64) {
    for (i, &theta) in thetas.iter().enumerate() {
        let angle = pos * theta;
        let (c, s) = (angle.cos(), angle.sin());
        let (x0, x1) = (x[2 * i], x[2 * i + 1]);
        x[2 * i] = c * x0 - s * x1;
        x[2 * i + 1] = s * x0 + c * x1;
    }
}

/// Score at relative offset `n − m` evaluated in closed form:
/// `qᵀR((n−m)θ_i)k` summed over pairs.
pub(crate) fn rope_relative_score(q: &[f64], k: &[f64], m: i64, n: i64, thetas: &[f64]) -> f64 {
    let u = (n - m) as f64;
    let mut score = 0.0;
    for (i, &theta) in thetas.iter().enumerate() {
        let angle = u * theta;
        let (c, s) = (angle.cos(), angle.sin());
        let (q0, q1) = (q[2 * i], q[2 * i + 1]);
        let (k0, k1) = (k[2 * i], k[2 * i + 1]);
        score += (q0 * k0 + q1 * k1) * c + (q1 * k0 - q0 * k1) * s;
    }
    score
}

/// Rotation blocks for a run of positions (tape-side factored path).
pub fn rope_row_map(
    config: &EncodingConfig,
    positions: &[usize],
) -> Result<RowBlockMap, EncodingError> {
    if config.variant != Variant::Rope {
        return Err(EncodingError::WrongVariant { expected: Variant::Rope, got: config.variant });
    }
    let thetas = frequency_schedule(config)?.thetas().to_vec();
    let mut blocks = Vec::with_capacity(positions.len() * thetas.len());
    for &pos in positions {
        for &theta in &thetas {
            let angle = pos as f64 * theta;
            let (c, s) = (angle.cos(), angle.sin());
            blocks.push([c, -s, s, c]);
        }
    }
    Ok(RowBlockMap::new(config.head_dim, blocks, vec![1.0; positions.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn origin_is_identity() {
        let cfg = EncodingConfig::rope(4);
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(rope_transform(&x, 0, &cfg).unwrap(), x.to_vec());
    }

    #[test]
    fn quarter_turn() {
        // Single pair, pos * theta = pi/2 via freq_scale.
        let cfg = EncodingConfig {
            freq_scale: std::f64::consts::FRAC_PI_2,
            ..EncodingConfig::rope(2)
        };
        let got = rope_transform(&[1.0, 0.0], 1, &cfg).unwrap();
        assert!(got[0].abs() <= 1e-15 && (got[1] - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn norm_is_preserved() {
        let cfg = EncodingConfig::rope(16);
        let mut rng = RngState::new(4);
        for trial in 0..20 {
            let x: Vec<f64> = (0..16).map(|_| rng.next_uniform() * 4.0 - 2.0).collect();
            let pos = trial * 499 % 10_000;
            let y = rope_transform(&x, pos, &cfg).unwrap();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nx - ny).abs() <= 1e-12, "pos {pos}: {nx} vs {ny}");
        }
    }

    #[test]
    fn closed_form_score_matches_transforms() {
        let cfg = EncodingConfig::rope(8);
        let thetas = frequency_schedule(&cfg).unwrap().thetas().to_vec();
        let mut rng = RngState::new(13);
        for trial in 0..30 {
            let q: Vec<f64> = (0..8).map(|_| rng.next_uniform() - 0.5).collect();
            let k: Vec<f64> = (0..8).map(|_| rng.next_uniform() - 0.5).collect();
            let (m, n) = ((trial * 11) % 500, (trial * 17) % 500);
            let tq = rope_transform(&q, m, &cfg).unwrap();
            let tk = rope_transform(&k, n, &cfg).unwrap();
            let dot: f64 = tq.iter().zip(&tk).map(|(a, b)| a * b).sum();
            let closed = rope_relative_score(&q, &k, m as i64, n as i64, &thetas);
            assert!((dot - closed).abs() <= 1e-12, "m={m} n={n}");
        }
    }
}

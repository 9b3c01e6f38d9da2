//! The unified 2D-generator kernel.
//!
//! Both rotary encoders are the same construction instantiated with a
//! different one-parameter subgroup: queries get `e^{−mθ′}·ρ(mθ_i)` per pair
//! and keys get `e^{+nθ′}·ρ(−nθ_i)ᵀ`, so the score collapses to
//! `e^{−(m−n)θ′}·qᵀρ((m−n)θ_i)ᵀk`. With circular rotations and θ′ = 0 this
//! is exactly RoPE; with hyperbolic boosts it is exactly HoPE.

use crate::lorentz::{gen2_matrix, mat2_apply, Gen2, Gen2Kind};

use super::config::{frequency_schedule, EncodingConfig, EncodingError};
use super::hope::Role;

/// Apply the generator kernel of the given `kind` to one vector.
pub fn unified_transform(
    x: &[f64],
    pos: usize,
    role: Role,
    kind: Gen2Kind,
    config: &EncodingConfig,
) -> Result<Vec<f64>, EncodingError> {
    let thetas = frequency_schedule(config)?.thetas().to_vec();
    let p = pos as f64;
    let (sign, damp) = match role {
        Role::Query => (1.0, (-p * config.theta_prime).exp()),
        Role::Key => (-1.0, (p * config.theta_prime).exp()),
    };
    let mut out = Vec::with_capacity(x.len());
    for (i, &theta) in thetas.iter().enumerate() {
        let g = Gen2 { kind, angle: sign * p * theta };
        let m = gen2_matrix(g);
        // Keys use the transpose of ρ(−nθ): the contragredient action that
        // makes the score relative for orthogonal and symmetric kinds alike.
        let m = match role {
            Role::Query => m,
            Role::Key => [[m[0][0], m[1][0]], [m[0][1], m[1][1]]],
        };
        let v = mat2_apply(&m, [x[2 * i], x[2 * i + 1]]);
        out.push(damp * v[0]);
        out.push(damp * v[1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::hope::{hope_transform_key, hope_transform_query};
    use crate::encodings::rope::rope_transform;
    use crate::numerics::RngState;

    #[test]
    fn rotation_kind_with_zero_damping_reproduces_rope() {
        let cfg = EncodingConfig::rope(8);
        let mut rng = RngState::new(21);
        for trial in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| rng.next_uniform() * 2.0 - 1.0).collect();
            let pos = (trial * 83) % 4097;
            let standalone = rope_transform(&x, pos, &cfg).unwrap();
            let unified =
                unified_transform(&x, pos, Role::Query, Gen2Kind::Rotation, &cfg).unwrap();
            for (a, b) in standalone.iter().zip(&unified) {
                assert!((a - b).abs() <= 1e-12, "query pos {pos}");
            }
            // RoPE applies the same rotation to keys; the contragredient of a
            // rotation is that rotation.
            let unified_key =
                unified_transform(&x, pos, Role::Key, Gen2Kind::Rotation, &cfg).unwrap();
            for (a, b) in standalone.iter().zip(&unified_key) {
                assert!((a - b).abs() <= 1e-12, "key pos {pos}");
            }
        }
    }

    #[test]
    fn boost_kind_reproduces_hope() {
        let cfg = EncodingConfig::hope(6);
        let mut rng = RngState::new(22);
        for trial in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.next_uniform() * 2.0 - 1.0).collect();
            let pos = (trial * 31) % 512;
            let q = hope_transform_query(&x, pos, &cfg).unwrap();
            let qu = unified_transform(&x, pos, Role::Query, Gen2Kind::Boost, &cfg).unwrap();
            let k = hope_transform_key(&x, pos, &cfg).unwrap();
            let ku = unified_transform(&x, pos, Role::Key, Gen2Kind::Boost, &cfg).unwrap();
            for ((a, b), (c, d)) in q.iter().zip(&qu).zip(k.iter().zip(&ku)) {
                assert!((a - b).abs() <= 1e-12 && (c - d).abs() <= 1e-12, "pos {pos}");
            }
        }
    }
}

//! The cross-module property suite: each check measures its worst error
//! against a stated tolerance on a given config, so the same battery can
//! run on defaults in CI and on user configs from the command line.

use serde::Serialize;

use crate::encodings::{
    factored_accurate, hope_score_fused, hope_transform_key, hope_transform_query,
    rope_transform, unified_transform, Encoder, EncodingConfig, PositionalEncoder, Role, Variant,
};
use crate::lorentz::{
    boost_matrix, gen2_compose, gen2_matrix, lorentz_defect, mat2_apply, mat2_mul,
    rotation_matrix, Axis, Gen2,
};
use crate::numerics::{tensor::dot, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyStatus {
    Pass,
    Fail,
    /// The config sits outside the property's hypotheses (e.g. the decay
    /// bound needs θ′ strictly above max θ_i).
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub status: PropertyStatus,
    pub max_error: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

impl PropertyResult {
    fn measured(name: &str, max_error: f64, tolerance: f64, detail: String) -> Self {
        let status =
            if max_error <= tolerance { PropertyStatus::Pass } else { PropertyStatus::Fail };
        Self { name: name.to_string(), status, max_error: Some(max_error), tolerance, detail }
    }

    fn not_applicable(name: &str, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            status: PropertyStatus::NotApplicable,
            max_error: None,
            tolerance,
            detail,
        }
    }
}

/// Run every property against one config. The config's variant field is
/// ignored: rotary properties use hyperbolic/rotary flavors of the same
/// shape parameters.
pub fn run_all(config: &EncodingConfig) -> Result<Vec<PropertyResult>, crate::encodings::EncodingError> {
    config.validate()?;
    Ok(vec![
        shift_invariance(config, Variant::Rope),
        shift_invariance(config, Variant::Hope),
        decay_bound(config),
        rope_special_case(config),
        factored_vs_fused(config),
        lorentz_group_laws(),
    ])
}

fn hope_flavor(config: &EncodingConfig) -> EncodingConfig {
    EncodingConfig { variant: Variant::Hope, ..config.clone() }
}

fn rope_flavor(config: &EncodingConfig) -> EncodingConfig {
    EncodingConfig { variant: Variant::Rope, ..config.clone() }
}

/// Positions where the hyperbolic transform route keeps ~1e-11 accuracy;
/// beyond it the check would measure float conditioning, not the contract.
fn conditioned_max_pos(config: &EncodingConfig) -> usize {
    (6.5 / config.freq_scale) as usize
}

/// score(m, n) == score(m+t, n+t), checked through the per-vector
/// transforms over 200 random instances.
fn shift_invariance(config: &EncodingConfig, variant: Variant) -> PropertyResult {
    let tolerance = 1e-10;
    let name = format!("shift_invariance_{variant}");
    let cfg = match variant {
        Variant::Hope => hope_flavor(config),
        _ => rope_flavor(config),
    };
    let max_pos = match variant {
        Variant::Hope => conditioned_max_pos(&cfg).min(512),
        _ => 512,
    };
    if max_pos < 4 {
        return PropertyResult::not_applicable(
            &name,
            tolerance,
            format!("freq_scale {} leaves no conditioned positions", cfg.freq_scale),
        );
    }
    let enc = Encoder::from_config(&cfg).expect("validated");
    let d = cfg.head_dim;
    let mut rng = RngState::new(0x5157);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let q: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let k: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let n = rng.next_below(max_pos as u64 / 2) as usize;
        let m = n + rng.next_below((max_pos / 4).max(1) as u64) as usize;
        let headroom = max_pos - m;
        let t = rng.next_below(headroom.max(1) as u64) as usize;
        let score = |mm: usize, nn: usize| -> f64 {
            let tq = enc.transform_query(&q, mm).expect("in range");
            let tk = enc.transform_key(&k, nn).expect("in range");
            dot(&tq, &tk)
        };
        worst = worst.max((score(m, n) - score(m + t, n + t)).abs());
    }
    PropertyResult::measured(&name, worst, tolerance, format!("200 instances, pos <= {max_pos}"))
}

/// |score(δ)| <= Σ_pairs ||q_i|| ||k_i|| e^{−δ(θ′−θ_i)} for δ >= 0, with
/// equality on the boost eigenvector in the d=2 case.
fn decay_bound(config: &EncodingConfig) -> PropertyResult {
    let tolerance = 1e-12;
    let name = "decay_bound_hope";
    let cfg = hope_flavor(config);
    if cfg.theta_prime <= cfg.freq_scale {
        return PropertyResult::not_applicable(
            name,
            tolerance,
            "theta_prime equals max theta_i; the bound needs strict inequality".to_string(),
        );
    }
    let enc = Encoder::from_config(&cfg).expect("validated");
    let thetas = enc.thetas().to_vec();
    let d = cfg.head_dim;
    let mut rng = RngState::new(0xdeca);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let k: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        for delta in [0usize, 1, 2, 5, 10, 50, 100, 500, 1000, 2000] {
            let score = hope_score_fused(&q, &k, delta as i64, &cfg).abs();
            let bound: f64 = thetas
                .iter()
                .enumerate()
                .map(|(i, &theta)| {
                    let nq = (q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1]).sqrt();
                    let nk = (k[2 * i] * k[2 * i] + k[2 * i + 1] * k[2 * i + 1]).sqrt();
                    nq * nk * (-(delta as f64) * (cfg.theta_prime - theta)).exp()
                })
                .sum();
            worst = worst.max(score - bound);
        }
    }
    PropertyResult::measured(
        name,
        worst.max(0.0),
        tolerance,
        "20 random vector pairs, delta up to 2000".to_string(),
    )
}

/// The unified generator kernel with circular rotations and θ′ = 0
/// reproduces the standalone rotary implementation.
fn rope_special_case(config: &EncodingConfig) -> PropertyResult {
    let tolerance = 1e-12;
    let name = "rope_special_case";
    let cfg = EncodingConfig { theta_prime: 0.0, ..rope_flavor(config) };
    let d = cfg.head_dim;
    let mut rng = RngState::new(0x20be);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let pos = rng.next_below(4097) as usize;
        let standalone = rope_transform(&x, pos, &cfg).expect("validated");
        for role in [Role::Query, Role::Key] {
            let unified = unified_transform(&x, pos, role, crate::lorentz::Gen2Kind::Rotation, &cfg)
                .expect("validated");
            for (a, b) in standalone.iter().zip(&unified) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    PropertyResult::measured(name, worst, tolerance, "100 vectors, positions <= 4096".to_string())
}

/// Factored-route inner products match the fused score inside the
/// conditioned position range.
fn factored_vs_fused(config: &EncodingConfig) -> PropertyResult {
    let tolerance = 1e-9;
    let name = "factored_equals_fused";
    let cfg = hope_flavor(config);
    let cap = conditioned_max_pos(&cfg).min((20.0 / cfg.theta_prime) as usize);
    if cap < 4 || !factored_accurate(&cfg, cap.min(4)) {
        return PropertyResult::not_applicable(
            name,
            tolerance,
            format!("freq_scale {} leaves no conditioned positions", cfg.freq_scale),
        );
    }
    let d = cfg.head_dim;
    let mut rng = RngState::new(0xfaced);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let k: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let m = rng.next_below(cap as u64) as usize;
        let n = rng.next_below(cap as u64) as usize;
        let tq = hope_transform_query(&q, m, &cfg).expect("in range");
        let tk = hope_transform_key(&k, n, &cfg).expect("in range");
        let factored = dot(&tq, &tk);
        let fused = hope_score_fused(&q, &k, m as i64 - n as i64, &cfg);
        worst = worst.max((factored - fused).abs() / 1.0f64.max(fused.abs()));
    }
    PropertyResult::measured(name, worst, tolerance, format!("100 instances, pos <= {cap}"))
}

/// Metric preservation, rapidity/angle additivity, the 2D group law, and
/// the boost norm bound.
fn lorentz_group_laws() -> PropertyResult {
    let tolerance = 1e-12;
    let name = "lorentz_group_laws";
    let mut rng = RngState::new(0x102e);
    let mut worst = 0.0f64;

    for i in 0..100 {
        let a = 4.0 * (rng.next_uniform() - 0.5);
        let m = match i % 6 {
            0 => boost_matrix(Axis::X, a),
            1 => boost_matrix(Axis::Y, a),
            2 => boost_matrix(Axis::Z, a),
            3 => rotation_matrix(Axis::X, a),
            4 => rotation_matrix(Axis::Y, a),
            _ => rotation_matrix(Axis::Z, a),
        };
        worst = worst.max(lorentz_defect(&m));
    }

    for _ in 0..50 {
        let a = 3.0 * (rng.next_uniform() - 0.5);
        let b = 3.0 * (rng.next_uniform() - 0.5);
        let prod = boost_matrix(Axis::X, a).mul(&boost_matrix(Axis::X, b));
        worst = worst.max(prod.max_abs_diff(&boost_matrix(Axis::X, a + b)));
        for make in [Gen2::rotation, Gen2::boost] {
            let lhs = gen2_matrix(gen2_compose(make(a), make(b)).expect("same kind"));
            let rhs = mat2_mul(&gen2_matrix(make(a)), &gen2_matrix(make(b)));
            for r in 0..2 {
                for c in 0..2 {
                    worst =
                        worst.max((lhs[r][c] - rhs[r][c]).abs() / 1.0f64.max(rhs[r][c].abs()));
                }
            }
        }
    }

    // Norm bound ||B(θ)v|| / ||v|| <= e^θ over 10^4 unit vectors.
    let theta = 0.6;
    let b = gen2_matrix(Gen2::boost(theta));
    let bound = theta.exp();
    for _ in 0..10_000 {
        let phi = rng.next_uniform() * std::f64::consts::TAU;
        let v = [phi.cos(), phi.sin()];
        let w = mat2_apply(&b, v);
        let ratio = (w[0] * w[0] + w[1] * w[1]).sqrt();
        worst = worst.max(ratio - bound);
    }

    PropertyResult::measured(
        name,
        worst.max(0.0),
        tolerance,
        "metric residuals, additivity, group law, norm bound".to_string(),
    )
}

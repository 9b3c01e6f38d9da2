//! Hyperbolic rotary encoding: damped boost transforms for queries and keys
//! plus the overflow-safe fused score.
//!
//! Query at position m gets `e^{−mθ′}·B(mθ_i)` per pair, key at position n
//! gets `e^{+nθ′}·B(−nθ_i)`, where `B` is the symmetric cosh/sinh boost
//! block. Their inner product collapses to a function of m−n alone:
//! `e^{−δθ′}·qᵀB(δθ_i)k` with δ = m−n.

use crate::lorentz::RAPIDITY_CAP;
use crate::numerics::{PairScoreTable, RowBlockMap};

use super::config::{frequency_schedule, EncodingConfig, EncodingError, Variant};

/// Max boost angle `pos·θ_max` for which the factored path keeps scores
/// accurate to ~1e-9: its pair products cancel terms of size e^{2·pos·θ},
/// so precision degrades as e^{2·pos·θ}·ε. Beyond this the fused score
/// path must be used.
pub const FACTORED_CONDITIONING_CAP: f64 = 7.5;

/// Which side of the attention product a transform serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Query,
    Key,
}

fn require_hope(config: &EncodingConfig) -> Result<Vec<f64>, EncodingError> {
    if config.variant != Variant::Hope {
        return Err(EncodingError::WrongVariant { expected: Variant::Hope, got: config.variant });
    }
    Ok(frequency_schedule(config)?.thetas().to_vec())
}

/// Reject positions whose boost angle or damping exponent would overflow the
/// factored path; the fused score path has no such cap.
pub fn check_factored_range(config: &EncodingConfig, position: usize) -> Result<(), EncodingError> {
    let pos = position as f64;
    if pos * config.theta_prime > RAPIDITY_CAP || pos * config.freq_scale > RAPIDITY_CAP {
        return Err(EncodingError::FactoredOverflow { position, limit: RAPIDITY_CAP });
    }
    Ok(())
}

/// Query transform: per pair (cosh, sinh; sinh, cosh) at angle mθ_i, then a
/// global factor e^{−mθ′}.
pub fn hope_transform_query(
    x: &[f64],
    m: usize,
    config: &EncodingConfig,
) -> Result<Vec<f64>, EncodingError> {
    let thetas = require_hope(config)?;
    check_factored_range(config, m)?;
    let mut out = x.to_vec();
    apply_boost_pairs(&mut out, &thetas, m as f64, Role::Query);
    let damp = (-(m as f64) * config.theta_prime).exp();
    for v in &mut out {
        *v *= damp;
    }
    Ok(out)
}

/// Key transform: per pair (cosh, −sinh; −sinh, cosh) at angle nθ_i, then a
/// global factor e^{+nθ′}.
pub fn hope_transform_key(
    x: &[f64],
    n: usize,
    config: &EncodingConfig,
) -> Result<Vec<f64>, EncodingError> {
    let thetas = require_hope(config)?;
    check_factored_range(config, n)?;
    let mut out = x.to_vec();
    apply_boost_pairs(&mut out, &thetas, n as f64, Role::Key);
    let damp = ((n as f64) * config.theta_prime).exp();
    for v in &mut out {
        *v *= damp;
    }
    Ok(out)
}

fn apply_boost_pairs(x: &mut [f64], thetas: &[f64], pos: f64, role: Role) {
    for (i, &theta) in thetas.iter().enumerate() {
        let angle = pos * theta;
        let (c, s) = (angle.cosh(), angle.sinh());
        let s = match role {
            Role::Query => s,
            Role::Key => -s,
        };
        let (x0, x1) = (x[2 * i], x[2 * i + 1]);
        x[2 * i] = c * x0 + s * x1;
        x[2 * i + 1] = s * x0 + c * x1;
    }
}

/// Pairwise hyperbolic score at relative offset `delta = m − n`.
///
/// Per pair: `e^{−δθ′}[(q₀k₀+q₁k₁)cosh(δθ) + (q₀k₁+q₁k₀)sinh(δθ)]`, folded
/// into the combined exponentials `½(e^{δ(θ−θ′)} ± e^{−δ(θ+θ′)})` so no
/// intermediate cosh can overflow while the score itself is representable.
pub fn hope_score_fused(q: &[f64], k: &[f64], delta: i64, config: &EncodingConfig) -> f64 {
    debug_assert_eq!(q.len(), config.head_dim);
    debug_assert_eq!(k.len(), config.head_dim);
    let thetas = frequency_schedule(config).expect("validated config").thetas().to_vec();
    hope_score_fused_with(q, k, delta, &thetas, config.theta_prime)
}

pub(crate) fn hope_score_fused_with(
    q: &[f64],
    k: &[f64],
    delta: i64,
    thetas: &[f64],
    theta_prime: f64,
) -> f64 {
    let d = delta as f64;
    let mut score = 0.0;
    for (i, &theta) in thetas.iter().enumerate() {
        let (q0, q1) = (q[2 * i], q[2 * i + 1]);
        let (k0, k1) = (k[2 * i], k[2 * i + 1]);
        let sym = q0 * k0 + q1 * k1;
        let cross = q0 * k1 + q1 * k0;
        let ep = (d * (theta - theta_prime)).exp();
        let em = (-d * (theta + theta_prime)).exp();
        score += 0.5 * (sym * (ep + em) + cross * (ep - em));
    }
    score
}

/// Rotation-only blocks (no damping factor) for a run of positions; the
/// factored attention path keeps these separate from the scale factors so
/// the fused fallback can reuse the rotations.
pub fn hope_blocks(
    config: &EncodingConfig,
    positions: &[usize],
    role: Role,
) -> Result<Vec<[f64; 4]>, EncodingError> {
    let thetas = require_hope(config)?;
    let mut blocks = Vec::with_capacity(positions.len() * thetas.len());
    for &pos in positions {
        check_factored_range(config, pos)?;
        for &theta in &thetas {
            let angle = pos as f64 * theta;
            let (c, s) = (angle.cosh(), angle.sinh());
            let s = match role {
                Role::Query => s,
                Role::Key => -s,
            };
            blocks.push([c, s, s, c]);
        }
    }
    Ok(blocks)
}

/// Per-position damping factors e^{∓pos·θ′} (− for queries, + for keys).
pub fn hope_scales(config: &EncodingConfig, positions: &[usize], role: Role) -> Vec<f64> {
    let sign = match role {
        Role::Query => -1.0,
        Role::Key => 1.0,
    };
    positions
        .iter()
        .map(|&p| (sign * p as f64 * config.theta_prime).exp())
        .collect()
}

/// Full per-row linear map (blocks and scales combined) for the tape.
pub fn hope_row_map(
    config: &EncodingConfig,
    positions: &[usize],
    role: Role,
) -> Result<RowBlockMap, EncodingError> {
    let blocks = hope_blocks(config, positions, role)?;
    let scales = hope_scales(config, positions, role);
    Ok(RowBlockMap::new(config.head_dim, blocks, scales))
}

/// Whether factored self-attention over `len` positions stays both in
/// floating-point range and well-conditioned.
pub fn factored_accurate(config: &EncodingConfig, len: usize) -> bool {
    if len == 0 {
        return true;
    }
    let max_pos = (len - 1) as f64;
    check_factored_range(config, len - 1).is_ok()
        && max_pos * config.freq_scale <= FACTORED_CONDITIONING_CAP
}

/// Fused-path coefficient table for self-attention over `len` positions:
/// per offset δ = i−j and pair frequency θ_p, the combined exponentials
/// ½(e^{δ(θ−θ′)} ± e^{−δ(θ+θ′)}). With `causal` set, the δ < 0 entries are
/// zeroed: those cells are masked downstream, and the raw anti-causal
/// values grow like e^{|δ|(θ+θ′)}.
pub fn hope_pair_score_table(
    config: &EncodingConfig,
    len: usize,
    causal: bool,
) -> Result<PairScoreTable, EncodingError> {
    let thetas = require_hope(config)?;
    let half = thetas.len();
    let mut ce = Vec::with_capacity((2 * len - 1) * half);
    let mut se = Vec::with_capacity((2 * len - 1) * half);
    for ix in 0..2 * len - 1 {
        let delta = ix as f64 - (len as f64 - 1.0);
        if causal && delta < 0.0 {
            ce.extend(std::iter::repeat(0.0).take(half));
            se.extend(std::iter::repeat(0.0).take(half));
            continue;
        }
        for &theta in &thetas {
            let ep = (delta * (theta - config.theta_prime)).exp();
            let em = (-delta * (theta + config.theta_prime)).exp();
            ce.push(0.5 * (ep + em));
            se.push(0.5 * (ep - em));
        }
    }
    Ok(PairScoreTable::new(len, config.head_dim, ce, se))
}

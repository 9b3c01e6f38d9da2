//! Scaled dot-product and multi-head attention parameterized by a
//! positional encoder.
//!
//! The factored path transforms each row by its position and takes a Gram
//! matrix, keeping the hyperbolic damping factors in a separate array from
//! the rotated vectors; the fused path evaluates pairwise scores in the
//! overflow-safe form. Overflow in the factored path falls back to fused
//! with a logged notice.

use std::fmt;

use crate::encodings::{
    factored_accurate, hope_blocks, hope_pair_score_table, hope_scales, Encoder, EncodingError,
    PositionalEncoder, Role, ScorePath, Variant,
};
use crate::numerics::{softmax_rows, GradTape, NumericsError, RowBlockMap, Tensor, Var};

/// Most-negative finite float as the causal mask sentinel: absorbed exactly
/// under addition and flushed to zero by max-subtracted softmax, without the
/// NaN risk of a true −∞ in 32-bit mode.
pub const MASK_SENTINEL: f64 = f64::MIN;

#[derive(Clone, Debug, PartialEq)]
pub enum AttentionError {
    Encoding(EncodingError),
    Numerics(NumericsError),
    /// Query/key/value shapes disagree or do not match the encoder.
    DimensionMismatch { what: &'static str, left: Vec<usize>, right: Vec<usize> },
    /// Sequence longer than the encoder's max_position.
    TooLong { len: usize, max_position: usize },
}

impl fmt::Display for AttentionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Encoding(e) => write!(f, "encoding: {e}"),
            Self::Numerics(e) => write!(f, "numerics: {e}"),
            Self::DimensionMismatch { what, left, right } => {
                write!(f, "{what}: shapes {left:?} vs {right:?}")
            }
            Self::TooLong { len, max_position } => {
                write!(f, "sequence length {len} exceeds max_position {max_position}")
            }
        }
    }
}

impl std::error::Error for AttentionError {}

impl From<EncodingError> for AttentionError {
    fn from(e: EncodingError) -> Self {
        Self::Encoding(e)
    }
}

impl From<NumericsError> for AttentionError {
    fn from(e: NumericsError) -> Self {
        Self::Numerics(e)
    }
}

/// Multi-head attention shape parameters plus the shared encoder config.
#[derive(Clone, Debug)]
pub struct AttentionConfig {
    pub n_heads: usize,
    pub head_dim: usize,
    pub causal: bool,
    pub encoder: crate::encodings::EncodingConfig,
}

impl AttentionConfig {
    pub fn model_dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.head_dim as f64).sqrt()
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        assert!(self.n_heads >= 1, "n_heads must be >= 1");
        self.encoder.validate()?;
        if self.encoder.head_dim != self.head_dim {
            return Err(AttentionError::DimensionMismatch {
                what: "encoder head_dim vs attention head_dim",
                left: vec![self.encoder.head_dim],
                right: vec![self.head_dim],
            });
        }
        Ok(())
    }
}

fn check_qk(q: &Tensor, k: &Tensor, enc: &Encoder) -> Result<(usize, usize), AttentionError> {
    let (lq, dq) = q.dims2()?;
    let (lk, dk) = k.dims2()?;
    if dq != dk || lq != lk {
        return Err(AttentionError::DimensionMismatch {
            what: "query vs key",
            left: q.shape().to_vec(),
            right: k.shape().to_vec(),
        });
    }
    if dq != enc.config().head_dim {
        return Err(AttentionError::DimensionMismatch {
            what: "inputs vs encoder head_dim",
            left: vec![dq],
            right: vec![enc.config().head_dim],
        });
    }
    if lq > enc.config().max_position {
        return Err(AttentionError::TooLong {
            len: lq,
            max_position: enc.config().max_position,
        });
    }
    Ok((lq, dq))
}

/// Raw attention logits: transformed-Q · transformed-Kᵀ (or pairwise fused
/// scores), scaled by 1/√d, plus the encoder's additive bias; causal entries
/// above the diagonal are set to the mask sentinel.
pub fn attn_scores(
    q: &Tensor,
    k: &Tensor,
    enc: &Encoder,
    causal: bool,
) -> Result<Tensor, AttentionError> {
    let (len, dim) = check_qk(q, k, enc)?;
    let scale = 1.0 / (dim as f64).sqrt();

    let use_factored = enc.config().score_path == ScorePath::Factored
        && factored_path_usable(enc, len, "attn_scores");
    let mut scores = if use_factored {
        let s = factored_scores(q, k, enc, len, scale)?;
        if s.all_finite() {
            s
        } else {
            log::warn!(
                "factored {} scores went non-finite at length {len}; falling back to fused path",
                enc.variant()
            );
            fused_scores(q, k, enc, len, scale)?
        }
    } else {
        fused_scores(q, k, enc, len, scale)?
    };

    if causal {
        for i in 0..len {
            for j in i + 1..len {
                scores.data_mut()[i * len + j] = MASK_SENTINEL;
            }
        }
    }
    Ok(scores)
}

/// The factored route is usable when its intermediates neither overflow nor
/// lose the 1e-9 agreement with the fused form (hyperbolic only; rotations
/// are orthogonal and always safe).
fn factored_path_usable(enc: &Encoder, len: usize, who: &str) -> bool {
    match enc.variant() {
        Variant::Hope => {
            let ok = factored_accurate(enc.config(), len);
            if !ok {
                log::warn!(
                    "{who}: length {len} beyond the factored range of the hyperbolic path \
                     (overflow or conditioning); using the fused score path"
                );
            }
            ok
        }
        _ => true,
    }
}

fn factored_scores(
    q: &Tensor,
    k: &Tensor,
    enc: &Encoder,
    len: usize,
    scale: f64,
) -> Result<Tensor, AttentionError> {
    let positions: Vec<usize> = (0..len).collect();
    // Rotations and damping factors kept as separate arrays so the fused
    // fallback can reuse the rotated vectors.
    let (tq, sq) = rotate_only(q, enc, &positions, Role::Query)?;
    let (tk, sk) = rotate_only(k, enc, &positions, Role::Key)?;
    let mut scores = crate::numerics::matmul_nt(&tq, &tk)?;
    for i in 0..len {
        for j in 0..len {
            let cell = &mut scores.data_mut()[i * len + j];
            *cell = *cell * sq[i] * sk[j] * scale + enc.score_bias(i.max(j), j.min(i))?;
        }
    }
    Ok(scores)
}

fn rotate_only(
    x: &Tensor,
    enc: &Encoder,
    positions: &[usize],
    role: Role,
) -> Result<(Tensor, Vec<f64>), AttentionError> {
    match enc.variant() {
        Variant::Hope => {
            let blocks = hope_blocks(enc.config(), positions, role)?;
            let map = RowBlockMap::new(enc.config().head_dim, blocks, vec![1.0; positions.len()]);
            let scales = hope_scales(enc.config(), positions, role);
            Ok((map.apply(x)?, scales))
        }
        Variant::Rope => {
            let map = enc.row_map(positions, role)?.expect("rope has a row map");
            Ok((map.apply(x)?, vec![1.0; positions.len()]))
        }
        Variant::Alibi | Variant::Sinusoidal | Variant::Nope => {
            Ok((x.clone(), vec![1.0; positions.len()]))
        }
    }
}

fn fused_scores(
    q: &Tensor,
    k: &Tensor,
    enc: &Encoder,
    len: usize,
    scale: f64,
) -> Result<Tensor, AttentionError> {
    let mut scores = Tensor::zeros(&[len, len]);
    for i in 0..len {
        for j in 0..len {
            let raw = enc.relative_score(q.row(i), k.row(j), i, j);
            scores.data_mut()[i * len + j] = raw * scale + enc.score_bias(i.max(j), j.min(i))?;
        }
    }
    Ok(scores)
}

/// Full attention: `softmax_rows(scores) · V`.
pub fn attn_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    enc: &Encoder,
    causal: bool,
) -> Result<Tensor, AttentionError> {
    let scores = attn_scores(q, k, enc, causal)?;
    let probs = softmax_rows(&scores)?;
    Ok(crate::numerics::matmul(&probs, v)?)
}

/// Tape-recorded attention, differentiable end-to-end. Hyperbolic scores
/// switch to the fused pairwise op whenever the factored route would
/// overflow or lose precision.
pub fn attn_forward_tape(
    tape: &mut GradTape,
    q: Var,
    k: Var,
    v: Var,
    enc: &Encoder,
    causal: bool,
) -> Result<Var, AttentionError> {
    let (len, dim) = check_qk(tape.value(q), tape.value(k), enc)?;
    let raw = if enc.variant() == Variant::Hope
        && (enc.config().score_path == ScorePath::Fused
            || !factored_path_usable(enc, len, "attn_forward_tape"))
    {
        let table = hope_pair_score_table(enc.config(), len, causal)?;
        tape.pair_scores(q, k, std::rc::Rc::new(table))?
    } else {
        let positions: Vec<usize> = (0..len).collect();
        let tq = match enc.row_map(&positions, Role::Query)? {
            Some(map) => tape.row_block_map(q, std::rc::Rc::new(map))?,
            None => q,
        };
        let tk = match enc.row_map(&positions, Role::Key)? {
            Some(map) => tape.row_block_map(k, std::rc::Rc::new(map))?,
            None => k,
        };
        tape.matmul_nt(tq, tk)?
    };
    let scaled = tape.scale(raw, 1.0 / (dim as f64).sqrt());

    // Constant additive matrix: encoder bias plus causal sentinel.
    let mut extra = Tensor::zeros(&[len, len]);
    for i in 0..len {
        for j in 0..len {
            extra.data_mut()[i * len + j] = if causal && j > i {
                MASK_SENTINEL
            } else {
                enc.score_bias(i.max(j), j.min(i))?
            };
        }
    }
    let masked = tape.add_const(scaled, &extra)?;
    let probs = tape.softmax_rows(masked)?;
    Ok(tape.matmul(probs, v)?)
}

/// Projection parameters of one multi-head block, as tape leaves.
#[derive(Clone, Copy, Debug)]
pub struct MultiHeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

/// Multi-head attention: per-head projection → attention → concat → output
/// projection. The encoder is instantiated per head so ALiBi heads get
/// their own slopes.
pub fn multi_head_forward_tape(
    tape: &mut GradTape,
    x: Var,
    params: MultiHeadVars,
    config: &AttentionConfig,
) -> Result<Var, AttentionError> {
    config.validate()?;
    let (_, d_model) = tape.value(x).dims2()?;
    if d_model != config.model_dim() {
        return Err(AttentionError::DimensionMismatch {
            what: "input vs n_heads*head_dim",
            left: vec![d_model],
            right: vec![config.model_dim()],
        });
    }
    let q = tape.matmul(x, params.wq)?;
    let k = tape.matmul(x, params.wk)?;
    let v = tape.matmul(x, params.wv)?;
    let mut heads = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let (lo, hi) = (h * config.head_dim, (h + 1) * config.head_dim);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let enc = Encoder::for_head(&config.encoder, h, config.n_heads)?;
        heads.push(attn_forward_tape(tape, qh, kh, vh, &enc, config.causal)?);
    }
    let concat = tape.concat_cols(&heads)?;
    Ok(tape.matmul(concat, params.wo)?)
}

/// Pure multi-head forward for tests and analysis: runs the tape variant on
/// a throwaway tape.
pub fn multi_head_forward(
    x: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    wo: &Tensor,
    config: &AttentionConfig,
) -> Result<Tensor, AttentionError> {
    let mut tape = GradTape::new();
    let xv = tape.input(x.clone());
    let params = MultiHeadVars {
        wq: tape.leaf(wq.clone()),
        wk: tape.leaf(wk.clone()),
        wv: tape.leaf(wv.clone()),
        wo: tape.leaf(wo.clone()),
    };
    let out = multi_head_forward_tape(&mut tape, xv, params, config)?;
    Ok(tape.value(out).clone())
}

//! The toy decoder-only transformer: pre-norm residual blocks of multi-head
//! attention and a SiLU feed-forward, RMS-normalized, with a positional
//! encoder chosen by config.

use crate::attention::{multi_head_forward_tape, AttentionConfig, MultiHeadVars};
use crate::encodings::{sinusoidal_embedding, EncodingConfig, Variant};
use crate::numerics::{GradTape, RngState, Tensor, Var};

use super::tasks::loss_mask;
use super::{Dataset, ToylmError};

const RMS_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;

/// Toy transformer hyperparameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub train_len: usize,
    pub tied_embeddings: bool,
    pub encoder: EncodingConfig,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, 2 heads of 16, FFN 128, train length
    /// 64 — a proportional shrink of the 12/12/64/3072/1024 full recipe.
    pub fn desk_scale(encoder: EncodingConfig) -> Self {
        Self {
            layers: 2,
            n_heads: 2,
            head_dim: 16,
            ffn_dim: 128,
            vocab_size: 32,
            train_len: 64,
            tied_embeddings: false,
            encoder,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    pub fn validate(&self) -> Result<(), ToylmError> {
        if self.layers == 0 || self.n_heads == 0 || self.ffn_dim == 0 {
            return Err(ToylmError::BadModelConfig {
                what: "layers, n_heads and ffn_dim must be positive",
            });
        }
        if self.vocab_size < 2 || self.train_len < 2 {
            return Err(ToylmError::BadModelConfig {
                what: "vocab_size and train_len must be at least 2",
            });
        }
        if self.encoder.head_dim != self.head_dim {
            return Err(ToylmError::BadModelConfig {
                what: "encoder head_dim must equal the attention head_dim",
            });
        }
        self.encoder.validate()?;
        Ok(())
    }

    /// Closed-form parameter count:
    /// `V·D + L·(2D + 4D² + 2·D·F) + D (+ D·V untied)`.
    pub fn param_count(&self) -> usize {
        let d = self.model_dim();
        let per_layer = 2 * d + 4 * d * d + 2 * d * self.ffn_dim;
        let head = if self.tied_embeddings { 0 } else { d * self.vocab_size };
        self.vocab_size * d + self.layers * per_layer + d + head
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            n_heads: self.n_heads,
            head_dim: self.head_dim,
            causal: true,
            encoder: self.encoder.clone(),
        }
    }
}

/// Named parameter tensors in a fixed order (the save-file and gradient
/// order).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Round every tensor through 32-bit storage — the state a model has
    /// after a save/load round trip. Evaluation always goes through this so
    /// in-process reports match reloaded artifacts exactly.
    pub fn quantize_to_storage(&self) -> ModelParams {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), t.round_to_f32()))
                .collect(),
        }
    }
}

/// Deterministic initialization: every weight matrix is drawn from the seed
/// stream in parameter order as N(0, 0.02²); norm gains start at 1.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ModelParams, ToylmError> {
    config.validate()?;
    let d = config.model_dim();
    let mut rng = RngState::new(seed);
    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    let mut push_gauss = |tensors: &mut Vec<(String, Tensor)>, name: String, r: usize, c: usize| {
        tensors.push((name, crate::numerics::gaussian_matrix(&mut rng, r, c, INIT_STD)));
    };

    push_gauss(&mut tensors, "embed".into(), config.vocab_size, d);
    for l in 0..config.layers {
        tensors.push((format!("l{l}.attn_norm"), Tensor::filled(&[d], 1.0)));
        for w in ["wq", "wk", "wv", "wo"] {
            push_gauss(&mut tensors, format!("l{l}.{w}"), d, d);
        }
        tensors.push((format!("l{l}.ffn_norm"), Tensor::filled(&[d], 1.0)));
        push_gauss(&mut tensors, format!("l{l}.w1"), d, config.ffn_dim);
        push_gauss(&mut tensors, format!("l{l}.w2"), config.ffn_dim, d);
    }
    tensors.push(("final_norm".into(), Tensor::filled(&[d], 1.0)));
    if !config.tied_embeddings {
        push_gauss(&mut tensors, "head".into(), d, config.vocab_size);
    }
    Ok(ModelParams { tensors })
}

/// Parameter leaves registered on a tape, in the same fixed order.
pub struct ModelVars {
    pub vars: Vec<Var>,
    names: Vec<String>,
}

impl ModelVars {
    pub fn register(tape: &mut GradTape, params: &ModelParams) -> Self {
        let mut vars = Vec::with_capacity(params.tensors.len());
        let mut names = Vec::with_capacity(params.tensors.len());
        for (name, t) in &params.tensors {
            vars.push(tape.leaf(t.clone()));
            names.push(name.clone());
        }
        Self { vars, names }
    }

    fn get(&self, name: &str) -> Var {
        let ix = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter {name} missing"));
        self.vars[ix]
    }
}

/// Token logits `[L, vocab]` for one sequence, recorded on the tape.
pub fn forward_tape(
    tape: &mut GradTape,
    vars: &ModelVars,
    tokens: &[usize],
    config: &ModelConfig,
) -> Result<Var, ToylmError> {
    let d = config.model_dim();
    let mut h = tape.gather_rows(vars.get("embed"), tokens.to_vec())?;

    if config.encoder.variant == Variant::Sinusoidal {
        // Absolute PE added at the input; attention itself stays unmodified.
        let mut pe = Tensor::zeros(&[tokens.len(), d]);
        for t in 0..tokens.len() {
            let e = sinusoidal_embedding(t, d, config.encoder.base_wavelength)?;
            pe.data_mut()[t * d..(t + 1) * d].copy_from_slice(&e);
        }
        h = tape.add_const(h, &pe)?;
    }

    let attn_config = config.attention();
    for l in 0..config.layers {
        let normed = tape.rms_norm_rows(h, RMS_EPS)?;
        let normed = tape.mul_row(normed, vars.get(&format!("l{l}.attn_norm")))?;
        let mh = MultiHeadVars {
            wq: vars.get(&format!("l{l}.wq")),
            wk: vars.get(&format!("l{l}.wk")),
            wv: vars.get(&format!("l{l}.wv")),
            wo: vars.get(&format!("l{l}.wo")),
        };
        let attn = multi_head_forward_tape(tape, normed, mh, &attn_config)?;
        h = tape.add(h, attn)?;

        let normed = tape.rms_norm_rows(h, RMS_EPS)?;
        let normed = tape.mul_row(normed, vars.get(&format!("l{l}.ffn_norm")))?;
        let up = tape.matmul(normed, vars.get(&format!("l{l}.w1")))?;
        let act = tape.silu(up);
        let down = tape.matmul(act, vars.get(&format!("l{l}.w2")))?;
        h = tape.add(h, down)?;
    }

    let z = tape.rms_norm_rows(h, RMS_EPS)?;
    let z = tape.mul_row(z, vars.get("final_norm"))?;
    let logits = if config.tied_embeddings {
        tape.matmul_nt(z, vars.get("embed"))?
    } else {
        tape.matmul(z, vars.get("head"))?
    };
    Ok(logits)
}

/// Masked next-token cross-entropy of one sequence: position `t` predicts
/// `tokens[t+1]` wherever the task mask marks the target predictable.
pub fn sequence_loss(
    tape: &mut GradTape,
    vars: &ModelVars,
    tokens: &[usize],
    target_mask: &[f64],
    config: &ModelConfig,
) -> Result<Var, ToylmError> {
    let logits = forward_tape(tape, vars, tokens, config)?;
    let (targets, weights) = shift_targets(tokens, target_mask);
    Ok(tape.cross_entropy_rows(logits, targets, weights)?)
}

/// Align `(targets, weights)` with logit rows: row `t` is scored against
/// `tokens[t+1]` with `mask[t+1]`; the final row gets weight 0.
pub fn shift_targets(tokens: &[usize], target_mask: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let l = tokens.len();
    let mut targets = vec![0usize; l];
    let mut weights = vec![0.0; l];
    for t in 0..l - 1 {
        targets[t] = tokens[t + 1];
        weights[t] = target_mask[t + 1];
    }
    (targets, weights)
}

/// Mask-aware loss of one dataset sequence (convenience for tests/eval).
pub fn dataset_sequence_loss(
    tape: &mut GradTape,
    vars: &ModelVars,
    ds: &Dataset,
    index: usize,
    config: &ModelConfig,
) -> Result<Var, ToylmError> {
    let tokens = &ds.sequences[index];
    let mask = loss_mask(ds.kind, tokens);
    sequence_loss(tape, vars, tokens, &mask, config)
}

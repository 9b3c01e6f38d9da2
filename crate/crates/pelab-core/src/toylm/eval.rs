//! Zero-shot perplexity over a grid of sequence lengths with
//! non-overlapping windows.

use serde::Serialize;

use crate::numerics::GradTape;

use super::model::{forward_tape, shift_targets, ModelConfig, ModelParams, ModelVars};
use super::tasks::loss_mask;
use super::{Dataset, ToylmError};

/// Per-length mean negative log likelihood and perplexity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub lengths: Vec<usize>,
    pub mean_nll: Vec<f64>,
    pub perplexity: Vec<f64>,
}

/// Evaluate perplexity at each length: every sequence is cut into
/// non-overlapping windows of that length, each window is processed as a
/// fresh sequence (positions restart at zero, exactly as at inference), and
/// the masked NLL is averaged over all windows.
pub fn eval_perplexity(
    params: &ModelParams,
    config: &ModelConfig,
    dataset: &Dataset,
    lengths: &[usize],
) -> Result<EvalReport, ToylmError> {
    config.validate()?;
    if lengths.is_empty() || lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ToylmError::BadModelConfig { what: "lengths must be strictly increasing" });
    }
    let max_len = *lengths.last().expect("non-empty");
    if dataset.sequences.iter().any(|s| s.len() < max_len) {
        return Err(ToylmError::EvalTooShort { need: max_len });
    }
    if max_len > config.encoder.max_position {
        return Err(ToylmError::LengthExceedsMaxPosition {
            length: max_len,
            max_position: config.encoder.max_position,
        });
    }

    // Evaluation always sees storage-precision parameters so in-process
    // numbers match a saved-and-reloaded model exactly.
    let params = params.quantize_to_storage();

    let mut mean_nll = Vec::with_capacity(lengths.len());
    let mut perplexity = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let mut nll_sum = 0.0;
        let mut weight_sum = 0.0;
        for seq in &dataset.sequences {
            let mask = loss_mask(dataset.kind, seq);
            for window in 0..seq.len() / len {
                let (lo, hi) = (window * len, (window + 1) * len);
                let tokens = &seq[lo..hi];
                let (targets, weights) = shift_targets(tokens, &mask[lo..hi]);
                let w: f64 = weights.iter().sum();
                if w == 0.0 {
                    continue;
                }
                let mut tape = GradTape::with_options(false, crate::numerics::Precision::F64);
                let vars = ModelVars::register(&mut tape, &params);
                let logits = forward_tape(&mut tape, &vars, tokens, config)?;
                let loss = tape.cross_entropy_rows(logits, targets, weights)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(ToylmError::Diverged { step: 0, trace: vec![value] });
                }
                nll_sum += value * w;
                weight_sum += w;
            }
        }
        if weight_sum == 0.0 {
            return Err(ToylmError::NoPredictablePositions { length: len });
        }
        let nll = nll_sum / weight_sum;
        mean_nll.push(nll);
        perplexity.push(nll.exp());
    }
    Ok(EvalReport { lengths: lengths.to_vec(), mean_nll, perplexity })
}

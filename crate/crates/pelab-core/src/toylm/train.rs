//! Training loop: next-token cross-entropy on masked positions, optimized
//! with decoupled-weight-decay Adam at a constant learning rate.

use crate::numerics::{GradTape, Precision, RngState, Tensor};

use super::model::{dataset_sequence_loss, ModelConfig, ModelParams, ModelVars};
use super::{Dataset, ToylmError};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer and schedule settings.
///
/// The full-scale recipe this shrinks uses AdamW with weight decay 0.01 and
/// a constant learning rate; the desk-scale default rate is 1e-3 so the
/// synthetic tasks converge within a couple thousand steps.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainRecipe {
    pub batch_size: usize,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        Self {
            batch_size: 16,
            total_steps: 2000,
            weight_decay: 0.01,
            learning_rate: 1e-3,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

/// Trained parameters plus the per-step mean batch loss.
pub struct TrainResult {
    pub params: ModelParams,
    pub loss_trace: Vec<f64>,
}

/// Train `params` on `dataset` per the recipe. Single-threaded and
/// deterministic: batch indices come from per-step substreams of the recipe
/// seed, and the tape runs unchecked at the recipe precision.
pub fn train(
    mut params: ModelParams,
    dataset: &Dataset,
    recipe: &TrainRecipe,
    config: &ModelConfig,
) -> Result<TrainResult, ToylmError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ToylmError::EmptyDataset);
    }
    if dataset.sequence_length() != config.train_len {
        return Err(ToylmError::TrainLengthMismatch {
            dataset: dataset.sequence_length(),
            train_len: config.train_len,
        });
    }
    assert!(recipe.batch_size >= 1, "batch_size must be >= 1");

    let n_params = params.tensors.len();
    let mut m: Vec<Tensor> =
        params.tensors.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
    let mut v: Vec<Tensor> =
        params.tensors.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
    let mut trace = Vec::with_capacity(recipe.total_steps);

    for step in 0..recipe.total_steps {
        let mut batch_rng = RngState::substream(recipe.seed, step as u64);
        let mut grad_acc: Vec<Tensor> =
            params.tensors.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let mut batch_loss = 0.0;

        for _ in 0..recipe.batch_size {
            let ix = batch_rng.next_below(dataset.len() as u64) as usize;
            let mut tape = GradTape::with_options(false, recipe.precision);
            let vars = ModelVars::register(&mut tape, &params);
            let loss = dataset_sequence_loss(&mut tape, &vars, dataset, ix, config)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(ToylmError::Diverged { step, trace });
            }
            batch_loss += value;
            let grads = tape.backward(loss)?;
            for (acc, &var) in grad_acc.iter_mut().zip(&vars.vars) {
                let g = grads.get(var).expect("leaf gradient");
                for (a, &gv) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += gv;
                }
            }
        }

        let scale = 1.0 / recipe.batch_size as f64;
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(ToylmError::Diverged { step, trace });
        }
        trace.push(batch_loss);

        // AdamW: decoupled weight decay, bias-corrected moments.
        let t = (step + 1) as f64;
        let bc1 = 1.0 - BETA1.powf(t);
        let bc2 = 1.0 - BETA2.powf(t);
        for p in 0..n_params {
            let grads = grad_acc[p].data();
            let mp = m[p].data_mut();
            let vp = v[p].data_mut();
            let weights = params.tensors[p].1.data_mut();
            for i in 0..weights.len() {
                let g = grads[i] * scale;
                mp[i] = BETA1 * mp[i] + (1.0 - BETA1) * g;
                vp[i] = BETA2 * vp[i] + (1.0 - BETA2) * g * g;
                let m_hat = mp[i] / bc1;
                let v_hat = vp[i] / bc2;
                weights[i] -= recipe.learning_rate
                    * (m_hat / (v_hat.sqrt() + ADAM_EPS) + recipe.weight_decay * weights[i]);
            }
        }
    }

    Ok(TrainResult { params, loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::EncodingConfig;
    use crate::toylm::model::build_model;
    use crate::toylm::tasks::{synth_task, TaskKind};

    fn tiny_setup() -> (ModelConfig, ModelParams, Dataset) {
        let cfg = ModelConfig {
            layers: 1,
            n_heads: 2,
            head_dim: 4,
            ffn_dim: 16,
            vocab_size: 16,
            train_len: 16,
            tied_embeddings: false,
            encoder: EncodingConfig::hope(4),
        };
        let params = build_model(&cfg, 3).unwrap();
        let ds = synth_task(TaskKind::Copy, 5, 32, 16, 16).unwrap();
        (cfg, params, ds)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (cfg, params, ds) = tiny_setup();
        let recipe = TrainRecipe {
            total_steps: 3,
            learning_rate: 0.0,
            ..TrainRecipe::default()
        };
        let result = train(params.clone(), &ds, &recipe, &cfg).unwrap();
        assert_eq!(result.params, params);
    }

    #[test]
    fn one_step_reduces_the_batch_loss() {
        let (cfg, params, ds) = tiny_setup();
        // Deterministic single batch covering the whole (tiny) dataset.
        let recipe = TrainRecipe {
            batch_size: 8,
            total_steps: 1,
            learning_rate: 1e-3,
            seed: 4,
            ..TrainRecipe::default()
        };
        let before = train(params.clone(), &ds, &recipe, &cfg).unwrap();
        // Re-running the same step on the updated parameters measures the
        // same batch (same seed, step 0) after one update.
        let after = train(before.params.clone(), &ds, &recipe, &cfg).unwrap();
        assert!(
            after.loss_trace[0] < before.loss_trace[0],
            "loss did not drop: {} -> {}",
            before.loss_trace[0],
            after.loss_trace[0]
        );
    }

    #[test]
    fn training_is_deterministic_in_f64() {
        let (cfg, params, ds) = tiny_setup();
        let recipe = TrainRecipe { total_steps: 5, ..TrainRecipe::default() };
        let a = train(params.clone(), &ds, &recipe, &cfg).unwrap();
        let b = train(params, &ds, &recipe, &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (cfg, params, _) = tiny_setup();
        let ds = synth_task(TaskKind::Copy, 5, 8, 32, 16).unwrap();
        assert!(matches!(
            train(params, &ds, &TrainRecipe::default(), &cfg),
            Err(ToylmError::TrainLengthMismatch { .. })
        ));
    }
}

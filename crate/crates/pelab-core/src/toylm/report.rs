//! Train-short/test-long comparison across encoder variants: one training
//! run per (variant, seed), perplexity per length, aggregated into a
//! variants × lengths table.

use rayon::prelude::*;
use serde::Serialize;

use crate::encodings::EncodingConfig;
use crate::numerics::rng::mix_seed;

use super::eval::eval_perplexity;
use super::model::{build_model, ModelConfig};
use super::tasks::{synth_task, TaskKind};
use super::train::{train, TrainRecipe};
use super::ToylmError;

/// Knobs of the comparison besides the encoder configs themselves.
#[derive(Clone, Debug)]
pub struct ReportSettings {
    /// Model shape; its encoder field is replaced per variant.
    pub base_model: ModelConfig,
    pub n_train_sequences: usize,
    pub n_eval_sequences: usize,
    /// Evaluation lengths as multiples of train_len.
    pub length_multiples: Vec<usize>,
    /// Fan independent (variant, seed) runs out over threads.
    pub parallel: bool,
}

impl ReportSettings {
    pub fn desk_scale(base_model: ModelConfig) -> Self {
        Self {
            base_model,
            n_train_sequences: 512,
            n_eval_sequences: 32,
            length_multiples: vec![1, 2, 3, 4, 5, 6],
            parallel: true,
        }
    }
}

/// One variant's row: per-seed perplexities and their mean/std per length.
#[derive(Clone, Debug, Serialize)]
pub struct VariantRow {
    pub variant: String,
    pub config: EncodingConfig,
    /// `[seed][length]` perplexities.
    pub per_seed_ppl: Vec<Vec<f64>>,
    pub mean_ppl: Vec<f64>,
    /// Sample std over seeds; `None` with a single seed.
    pub std_ppl: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtrapolationReport {
    pub task: String,
    pub seeds: Vec<u64>,
    pub lengths: Vec<usize>,
    /// Rows in input config order.
    pub rows: Vec<VariantRow>,
}

impl ExtrapolationReport {
    /// Tidy CSV: one row per (variant, length) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,length,mean_ppl,std_ppl\n");
        for row in &self.rows {
            for (i, &len) in self.lengths.iter().enumerate() {
                let std = row
                    .std_ppl
                    .as_ref()
                    .map(|s| format!("{:.16e}", s[i]))
                    .unwrap_or_default();
                out.push_str(&format!("{},{},{:.16e},{}\n", row.variant, len, row.mean_ppl[i], std));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Deterministic data seeds: training data is shared across variants for a
/// given run seed, and each evaluation length gets its own eval set.
pub fn train_data_seed(run_seed: u64) -> u64 {
    mix_seed(run_seed, 0x7261_696e)
}

pub fn eval_data_seed(run_seed: u64, length: usize) -> u64 {
    mix_seed(run_seed, 0x6576_616c ^ (length as u64) << 32)
}

/// Train and evaluate one (encoder config, seed) cell.
pub fn run_one(
    config: &EncodingConfig,
    recipe: &TrainRecipe,
    task: TaskKind,
    seed: u64,
    settings: &ReportSettings,
) -> Result<Vec<f64>, ToylmError> {
    let model_cfg = ModelConfig { encoder: config.clone(), ..settings.base_model.clone() };
    model_cfg.validate()?;
    let train_len = model_cfg.train_len;
    let vocab = model_cfg.vocab_size;

    let train_ds = synth_task(
        task,
        train_data_seed(seed),
        settings.n_train_sequences,
        train_len,
        vocab,
    )?;
    let params = build_model(&model_cfg, seed)?;
    let run_recipe = TrainRecipe { seed, ..recipe.clone() };
    let trained = train(params, &train_ds, &run_recipe, &model_cfg)?;

    let mut ppl = Vec::with_capacity(settings.length_multiples.len());
    for &mult in &settings.length_multiples {
        let len = mult * train_len;
        let eval_ds = synth_task(
            task,
            eval_data_seed(seed, len),
            settings.n_eval_sequences,
            len,
            vocab,
        )?;
        let report = eval_perplexity(&trained.params, &model_cfg, &eval_ds, &[len])?;
        ppl.push(report.perplexity[0]);
    }
    Ok(ppl)
}

/// The full matrix: rows follow `configs` input order, columns follow the
/// length multiples; each cell averages over `seeds`.
pub fn extrapolation_report(
    configs: &[EncodingConfig],
    recipe: &TrainRecipe,
    task: TaskKind,
    seeds: &[u64],
    settings: &ReportSettings,
) -> Result<ExtrapolationReport, ToylmError> {
    assert!(!configs.is_empty(), "need at least one encoder config");
    assert!(!seeds.is_empty(), "need at least one seed");
    let lengths: Vec<usize> = settings
        .length_multiples
        .iter()
        .map(|m| m * settings.base_model.train_len)
        .collect();

    let cells: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| seeds.iter().map(move |&s| (ci, s)))
        .collect();
    let run = |&(ci, seed): &(usize, u64)| run_one(&configs[ci], recipe, task, seed, settings);
    let results: Vec<Result<Vec<f64>, ToylmError>> = if settings.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    };

    let mut rows = Vec::with_capacity(configs.len());
    for (ci, config) in configs.iter().enumerate() {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for (cell, result) in cells.iter().zip(&results) {
            if cell.0 == ci {
                per_seed.push(result.clone()?);
            }
        }
        let n = per_seed.len() as f64;
        let mean_ppl: Vec<f64> = (0..lengths.len())
            .map(|i| per_seed.iter().map(|p| p[i]).sum::<f64>() / n)
            .collect();
        let std_ppl = if per_seed.len() > 1 {
            Some(
                (0..lengths.len())
                    .map(|i| {
                        let mu = mean_ppl[i];
                        (per_seed.iter().map(|p| (p[i] - mu) * (p[i] - mu)).sum::<f64>()
                            / (n - 1.0))
                            .sqrt()
                    })
                    .collect(),
            )
        } else {
            None
        };
        rows.push(VariantRow {
            variant: config.variant.to_string(),
            config: config.clone(),
            per_seed_ppl: per_seed,
            mean_ppl,
            std_ppl,
        });
    }
    Ok(ExtrapolationReport {
        task: task.to_string(),
        seeds: seeds.to_vec(),
        lengths,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::EncodingConfig;

    fn fast_settings() -> (ReportSettings, TrainRecipe) {
        let base = ModelConfig {
            layers: 1,
            n_heads: 2,
            head_dim: 4,
            ffn_dim: 8,
            vocab_size: 16,
            train_len: 16,
            tied_embeddings: false,
            encoder: EncodingConfig::hope(4),
        };
        let settings = ReportSettings {
            n_train_sequences: 32,
            n_eval_sequences: 8,
            length_multiples: vec![1, 2],
            parallel: false,
            ..ReportSettings::desk_scale(base)
        };
        let recipe = TrainRecipe { total_steps: 3, batch_size: 4, ..TrainRecipe::default() };
        (settings, recipe)
    }

    #[test]
    fn single_variant_single_seed_row() {
        let (settings, recipe) = fast_settings();
        let configs = vec![EncodingConfig::hope(4)];
        let report =
            extrapolation_report(&configs, &recipe, TaskKind::Copy, &[1], &settings).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].per_seed_ppl.len(), 1);
        assert!(report.rows[0].std_ppl.is_none());
        assert_eq!(report.lengths, vec![16, 32]);
    }

    #[test]
    fn adding_a_seed_moves_the_mean_within_the_spread() {
        let (settings, recipe) = fast_settings();
        let configs = vec![EncodingConfig::hope(4)];
        let two =
            extrapolation_report(&configs, &recipe, TaskKind::Copy, &[1, 2], &settings).unwrap();
        let three =
            extrapolation_report(&configs, &recipe, TaskKind::Copy, &[1, 2, 3], &settings)
                .unwrap();
        for i in 0..two.lengths.len() {
            let values: Vec<f64> = three.rows[0].per_seed_ppl.iter().map(|p| p[i]).collect();
            let spread = values.iter().cloned().fold(f64::MIN, f64::max)
                - values.iter().cloned().fold(f64::MAX, f64::min);
            let delta = (three.rows[0].mean_ppl[i] - two.rows[0].mean_ppl[i]).abs();
            assert!(delta <= spread + 1e-12, "mean moved {delta} vs spread {spread}");
        }
    }

    #[test]
    fn row_order_matches_input_order() {
        let (settings, recipe) = fast_settings();
        let configs = vec![EncodingConfig::rope(4), EncodingConfig::hope(4)];
        let report =
            extrapolation_report(&configs, &recipe, TaskKind::Copy, &[1], &settings).unwrap();
        assert_eq!(report.rows[0].variant, "rope");
        assert_eq!(report.rows[1].variant, "hope");
        let csv = report.to_csv();
        let first_data_line = csv.lines().nth(1).unwrap();
        assert!(first_data_line.starts_with("rope,16,"));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let (mut settings, recipe) = fast_settings();
        let configs = vec![EncodingConfig::hope(4), EncodingConfig::nope(4)];
        let seq =
            extrapolation_report(&configs, &recipe, TaskKind::Copy, &[1, 2], &settings).unwrap();
        settings.parallel = true;
        let par =
            extrapolation_report(&configs, &recipe, TaskKind::Copy, &[1, 2], &settings).unwrap();
        for (a, b) in seq.rows.iter().zip(&par.rows) {
            assert_eq!(a.per_seed_ppl, b.per_seed_ppl);
        }
    }
}

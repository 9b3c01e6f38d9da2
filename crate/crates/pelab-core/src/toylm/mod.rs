//! Tiny decoder-only language model with train-short/test-long evaluation.

pub mod eval;
pub mod model;
pub mod params_io;
pub mod report;
pub mod tasks;
pub mod train;

pub use eval::{eval_perplexity, EvalReport};
pub use model::{build_model, forward_tape, ModelConfig, ModelParams, ModelVars};
pub use params_io::{load_params, save_params};
pub use report::{extrapolation_report, ExtrapolationReport, ReportSettings, VariantRow};
pub use tasks::{loss_mask, read_dataset, synth_task, write_dataset, Dataset, TaskKind};
pub use train::{train, TrainRecipe, TrainResult};

use std::fmt;
use std::path::PathBuf;

use crate::attention::AttentionError;
use crate::encodings::EncodingError;
use crate::numerics::NumericsError;

#[derive(Clone, Debug, PartialEq)]
pub enum ToylmError {
    BadTaskParam { what: &'static str, value: usize, min: usize },
    UnknownTask { name: String },
    BadModelConfig { what: &'static str },
    EmptyDataset,
    TrainLengthMismatch { dataset: usize, train_len: usize },
    /// Loss went non-finite; the trace holds everything up to the failure.
    Diverged { step: usize, trace: Vec<f64> },
    EvalTooShort { need: usize },
    LengthExceedsMaxPosition { length: usize, max_position: usize },
    /// No masked targets at this evaluation length.
    NoPredictablePositions { length: usize },
    Io { path: PathBuf, message: String },
    Corrupt { path: PathBuf, what: String },
    Numerics(NumericsError),
    Attention(AttentionError),
    Encoding(EncodingError),
}

impl fmt::Display for ToylmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadTaskParam { what, value, min } => {
                write!(f, "{what} must be >= {min}, got {value}")
            }
            Self::UnknownTask { name } => {
                write!(f, "unknown task `{name}` (expected copy|recall)")
            }
            Self::BadModelConfig { what } => write!(f, "bad model config: {what}"),
            Self::EmptyDataset => write!(f, "dataset has no sequences"),
            Self::TrainLengthMismatch { dataset, train_len } => write!(
                f,
                "dataset sequence length {dataset} does not equal train_len {train_len}"
            ),
            Self::Diverged { step, .. } => {
                write!(f, "training diverged (non-finite loss) at step {step}")
            }
            Self::EvalTooShort { need } => {
                write!(f, "evaluation sequences shorter than the longest length {need}")
            }
            Self::LengthExceedsMaxPosition { length, max_position } => {
                write!(f, "evaluation length {length} exceeds max_position {max_position}")
            }
            Self::NoPredictablePositions { length } => {
                write!(f, "no predictable positions at evaluation length {length}")
            }
            Self::Io { path, message } => write!(f, "i/o on {}: {message}", path.display()),
            Self::Corrupt { path, what } => {
                write!(f, "corrupt model file {}: {what}", path.display())
            }
            Self::Numerics(e) => write!(f, "numerics: {e}"),
            Self::Attention(e) => write!(f, "attention: {e}"),
            Self::Encoding(e) => write!(f, "encoding: {e}"),
        }
    }
}

impl std::error::Error for ToylmError {}

impl From<NumericsError> for ToylmError {
    fn from(e: NumericsError) -> Self {
        Self::Numerics(e)
    }
}

impl From<AttentionError> for ToylmError {
    fn from(e: AttentionError) -> Self {
        Self::Attention(e)
    }
}

impl From<EncodingError> for ToylmError {
    fn from(e: EncodingError) -> Self {
        Self::Encoding(e)
    }
}

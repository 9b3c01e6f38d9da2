//! Positional-encoding laboratory.
//!
//! A small, self-contained stack for studying how positional encodings shape
//! attention: a dense-tensor/autodiff substrate, Lorentz-group math, the
//! hyperbolic rotary encoder (HoPE) next to RoPE/ALiBi/sinusoidal/no-PE
//! baselines, an attention engine, decay-curve analysis, and a toy
//! decoder-only language model for train-short/test-long experiments.

pub mod analysis;
pub mod attention;
pub mod encodings;
pub mod lorentz;
pub mod numerics;
pub mod props;
pub mod toylm;

pub use numerics::{GradTape, RngState, Tensor, Var};

//! Numeric substrate: dense tensors, the PRNG, the gradient tape, and the
//! finite-difference oracle that keeps the tape honest.

pub mod gradcheck;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_params};
pub use rng::{gaussian, gaussian_matrix, RngState};
pub use tape::{GradTape, GradientMap, PairScoreTable, Precision, RowBlockMap, Var};
pub use tensor::{matmul, matmul_nt, matmul_tn, softmax_rows, NumericsError, Tensor};

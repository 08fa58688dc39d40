//! Dense matrices, the gradient tape and finite-difference checking.

pub mod gradcheck;
mod matrix;
mod param;
mod tape;

pub use gradcheck::{finite_difference_grad, max_relative_error, relative_error};
pub use matrix::{
    argmax, cross_entropy_mean, log_sum_exp, EmbeddingMatrix, Matrix, Real, NORM_EPS,
};
pub use param::{Param, Parameters};
pub(crate) use tape::batch_moments;
pub use tape::{Gradients, RunningStats, Tape, Var};

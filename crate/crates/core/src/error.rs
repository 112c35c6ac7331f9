use alloc::string::String;

use crate::tensor::Shape;
use crate::train::LossRecord;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: Shape, actual: Shape },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error(
        "matrix square root did not converge (dim {dim}, trace(sigma_a) {trace_a:.6e}, \
         trace(sigma_b) {trace_b:.6e})"
    )]
    SqrtNonConvergence { dim: usize, trace_a: f64, trace_b: f64 },

    #[error(
        "non-finite loss at step {} (epoch {}): d_loss={} g_adv={} g_l1={}",
        .0.step, .0.epoch, .0.d_loss, .0.g_adv_loss, .0.g_l1_loss
    )]
    NonFiniteLoss(LossRecord),

    #[error("weights: {0}")]
    Weights(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

//! Minimal reverse-mode automatic differentiation over `f64` tensors, with
//! the layers, optimizer and clipping the GAN needs.

mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod tensor;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport, DENOM_FLOOR};
pub use graph::{BatchStats, Gradients, Graph, Var};
pub use optim::{clip_params, rmsprop_step, OptimizerState, RmsPropConfig};
pub use params::{Bound, ParameterStore};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward needs a single-element loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("sequence of length {len} is too short for kernel {kernel}")]
    SequenceTooShort { len: usize, kernel: usize },
    #[error("{0}: non-finite value")]
    NonFinite(&'static str),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("clip value {0} must be positive")]
    InvalidClip(f64),
    #[error("finite-difference step {0} must be positive")]
    InvalidStep(f64),
    #[error("function under gradient check is not deterministic")]
    NonDeterministic,
    #[error("no parameter named {0:?}")]
    MissingParameter(String),
    #[error("parameter {0:?} already exists")]
    DuplicateParameter(String),
}

//! A small deterministic reverse-mode autodiff engine over f64 tensors,
//! with the layers the correspondence models are built from.

mod gradcheck;
mod graph;
mod nn;
mod optim;
mod tensor;

use thiserror::Error;

pub use gradcheck::{grad_check, grad_check_params, GradCheckConfig, GradCheckReport};
pub use graph::{fourier_features, Graph, Var, LAYER_NORM_EPS};
pub use nn::{
    conv, init_attention, init_conv, init_layer_norm, init_linear, init_mlp, layer_norm, linear, mlp,
    multi_head_attention, xavier_uniform, ParameterStore,
};
pub use optim::{Adam, AdamConfig, BACKBONE_PREFIX};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("duplicate parameter {0}")]
    DuplicateParam(String),
}

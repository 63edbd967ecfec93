//! A small, fixed-architecture neural stack with hand-written backward
//! passes: dense layers, ReLU, a three-layer GRU encoder run through time,
//! the projection head, Adam, and a finite-difference gradient checker.

mod adam;
mod dense;
pub mod gradcheck;
mod gru;
mod model;
mod tensor;

pub use adam::{AdamConfig, OptimizerState};
pub use dense::{relu_backward_in_place, relu_in_place, Dense};
pub use gradcheck::{grad_check, grad_check_at, CoordSelection, GradCheckReport};
pub use gru::{GruCache, GruLayer};
pub use model::{
    EncoderCache, EncoderParams, Model, NetworkShape, ProjectionCache, ProjectionParams,
};
pub use tensor::{Parameters, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: String },
    #[error("empty input: {0}")]
    Empty(String),
}

pub(crate) fn check_finite<T: crate::Real>(values: &[T], layer: &str) -> Result<(), NnError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite {
            layer: layer.to_string(),
        })
    }
}

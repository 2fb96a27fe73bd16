//! Trainable quantizers shared by every pipeline: vector quantization
//! (Lloyd's algorithm), product quantization, its rotation-learning
//! variant, and the scalar quantizers used for scales and projected
//! components.

mod opq;
mod pq;
mod scalar;
mod vq;

pub use opq::{train_opq, train_opq_traced, OpqTrace, Rotation};
pub use pq::{encode_pq, reconstruct_pq, subspace_ranges, train_pq, PqCodebook};
pub use scalar::{
    decode_uq, encode_uq, quantize_sq, train_sq, train_uq, uq_code_range, SqCodebook, UqParams,
};
pub use vq::{assign_vq, train_vq, train_vq_traced, VqCodebook};

use std::fmt;

#[derive(Debug)]
pub enum QuantError {
    /// Requested more centers than there are training points.
    TooManyCenters { m: usize, n: usize },
    NoCenters,
    TooManySubspaces { subspaces: usize, dim: usize },
    EmptyInput,
    NonFinite,
    BadDim { expected: usize, actual: usize },
    BadBits { bits: u8 },
}

impl fmt::Display for QuantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantError::TooManyCenters { m, n } => {
                write!(f, "cannot train {m} centers from {n} points")
            }
            QuantError::NoCenters => write!(f, "center count must be at least 1"),
            QuantError::TooManySubspaces { subspaces, dim } => {
                write!(f, "{subspaces} subspaces do not fit {dim} dimensions")
            }
            QuantError::EmptyInput => write!(f, "empty training input"),
            QuantError::NonFinite => write!(f, "non-finite training value"),
            QuantError::BadDim { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            QuantError::BadBits { bits } => write!(f, "unsupported bit width {bits}"),
        }
    }
}

impl std::error::Error for QuantError {}

//! Maximum inner product search over quantized vectors.
//!
//! An inverted file partitions the database with coarse k-means; inside
//! each partition, residuals are split along a per-partition direction
//! (by default the normalized center). The component orthogonal to the
//! direction is normalized, product-quantized under one global learned
//! rotation and rescaled by a norm-preserving per-vector scale; the
//! projected component is a single scalar stored with a per-partition
//! uniform quantizer after subtracting the orthogonal reconstruction's
//! leakage along the direction. Queries probe the partitions with the
//! best center inner products and score entries through lookup tables.
//!
//! Alongside the main pipeline: the classic comparison quantizers behind
//! the same machinery ([`baselines`]), an exact brute-force oracle and
//! fvecs/ivecs I/O ([`data`]), a recall harness with per-entry bit-budget
//! parity ([`eval`]), a versioned index container ([`format`]), synthetic
//! generators including exactly-representable datasets ([`synth`]), and
//! numerical verification of the concentration bounds that justify the
//! center-direction choice ([`theory`]).

pub mod baselines;
pub mod data;
pub mod eval;
pub mod format;
pub mod index;
pub mod linalg;
pub mod quant;
pub mod rng;
pub mod search;
pub mod synth;
pub mod theory;
pub mod topk;

//! Rotation-learning product quantization.
//!
//! Alternates between refining the subspace codebooks on the rotated data
//! and solving the orthogonal Procrustes problem for the rotation that
//! best aligns the data with its reconstructions. The quantization
//! objective is non-increasing across alternations because codebooks are
//! warm-started rather than re-seeded.

use rayon::prelude::*;

use super::pq::{encode_pq_into, refine_pq, reconstruct_pq, train_pq, PqCodebook};
use super::QuantError;
use crate::data::Dataset;
use crate::linalg::{self, procrustes_rotation, svd_square};

/// Orthonormal d×d matrix stored row-major. `apply` maps codeword space
/// back to data space; `apply_t` takes a query into codeword space.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    dim: usize,
    mat: Vec<f32>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        let mut mat = vec![0.0f32; dim * dim];
        for i in 0..dim {
            mat[i * dim + i] = 1.0;
        }
        Rotation { dim, mat }
    }

    pub fn from_mat(dim: usize, mat: Vec<f32>) -> Self {
        assert_eq!(mat.len(), dim * dim);
        Rotation { dim, mat }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &[f32] {
        &self.mat
    }

    /// R x.
    pub fn apply(&self, x: &[f32]) -> Vec<f64> {
        linalg::mat_vec(&self.mat, self.dim, x)
    }

    /// Rᵀ x.
    pub fn apply_t(&self, x: &[f32]) -> Vec<f64> {
        linalg::mat_t_vec(&self.mat, self.dim, x)
    }

    pub fn orthonormality_error(&self) -> f64 {
        linalg::orthonormality_error(&self.mat, self.dim)
    }
}

#[derive(Debug, Clone)]
pub struct OpqTrace {
    /// Quantization objective Σ‖Rᵀx − reconstruction‖² after the initial
    /// training and after every alternation.
    pub objectives: Vec<f64>,
    /// True if a Procrustes step failed and the rotation fell back to
    /// the identity.
    pub svd_fallback: bool,
}

fn rotate_rows(data: &Dataset, rot: &Rotation) -> Dataset {
    let rows: Vec<Vec<f32>> = (0..data.len())
        .into_par_iter()
        .map(|i| linalg::to_f32(&rot.apply_t(data.row(i))))
        .collect();
    Dataset::from_rows(&rows).expect("rotation preserves shape")
}

const CHUNK: usize = 2048;

/// Cross matrix M = Σ x x̂ᵀ plus the objective Σ‖x_r − x̂‖², where x̂ is
/// the reconstruction of the rotated row x_r. Work is chunked at a fixed
/// size and partials are combined in chunk order, so the result does not
/// depend on the thread count.
fn cross_matrix_and_objective(
    data: &Dataset,
    rotated: &Dataset,
    pq: &PqCodebook,
) -> (Vec<f64>, f64) {
    let d = data.dim();
    let n = data.len();
    let chunk_results: Vec<(Vec<f64>, f64)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut m = vec![0.0f64; d * d];
            let mut obj = 0.0f64;
            let mut codes = vec![0u16; pq.subspaces()];
            for i in lo..hi {
                encode_pq_into(pq, rotated.row(i), &mut codes);
                let recon = reconstruct_pq(pq, &codes);
                let x = data.row(i);
                let xr = rotated.row(i);
                for (a, b) in xr.iter().zip(recon.iter()) {
                    let e = *a as f64 - *b as f64;
                    obj += e * e;
                }
                for r in 0..d {
                    let xv = x[r] as f64;
                    let row = &mut m[r * d..(r + 1) * d];
                    for (slot, rec) in row.iter_mut().zip(recon.iter()) {
                        *slot += xv * *rec as f64;
                    }
                }
            }
            (m, obj)
        })
        .collect();
    let mut m = vec![0.0f64; d * d];
    let mut obj = 0.0f64;
    for (pm, po) in chunk_results {
        for (acc, v) in m.iter_mut().zip(pm.iter()) {
            *acc += v;
        }
        obj += po;
    }
    (m, obj)
}

pub fn train_opq(
    data: &Dataset,
    subspaces: usize,
    codewords: usize,
    outer_iters: usize,
    kmeans_iters: usize,
    seed: u64,
) -> Result<(Rotation, PqCodebook), QuantError> {
    train_opq_traced(data, subspaces, codewords, outer_iters, kmeans_iters, seed)
        .map(|(r, pq, _)| (r, pq))
}

pub fn train_opq_traced(
    data: &Dataset,
    subspaces: usize,
    codewords: usize,
    outer_iters: usize,
    kmeans_iters: usize,
    seed: u64,
) -> Result<(Rotation, PqCodebook, OpqTrace), QuantError> {
    let d = data.dim();
    if subspaces > d {
        return Err(QuantError::TooManySubspaces {
            subspaces,
            dim: d,
        });
    }
    let mut rot = Rotation::identity(d);
    let mut pq = train_pq(data, subspaces, codewords, kmeans_iters, seed)?;
    let mut trace = OpqTrace {
        objectives: Vec::with_capacity(outer_iters + 1),
        svd_fallback: false,
    };
    if outer_iters == 0 {
        return Ok((rot, pq, trace));
    }

    let (mut cross, obj) = cross_matrix_and_objective(data, data, &pq);
    trace.objectives.push(obj);
    for _ in 0..outer_iters {
        match svd_square(&cross, d) {
            Ok(svd) => {
                let r = procrustes_rotation(&svd);
                rot = Rotation::from_mat(d, linalg::to_f32(&r));
                debug_assert!(rot.orthonormality_error() <= 1e-5);
            }
            Err(_) => {
                // Degenerate cross matrix: keep a plain product quantizer.
                trace.svd_fallback = true;
                rot = Rotation::identity(d);
                pq = train_pq(data, subspaces, codewords, kmeans_iters, seed)?;
                let (_, obj) = cross_matrix_and_objective(data, data, &pq);
                trace.objectives.push(obj);
                return Ok((rot, pq, trace));
            }
        }
        let rotated = rotate_rows(data, &rot);
        pq = refine_pq(&pq, &rotated, kmeans_iters);
        let (m, obj) = cross_matrix_and_objective(data, &rotated, &pq);
        cross = m;
        trace.objectives.push(obj);
    }
    Ok((rot, pq, trace))
}

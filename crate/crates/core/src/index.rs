//! Index construction: coarse partitioning, per-partition projection
//! directions, multiscale quantization of the orthogonal residual
//! component and uniform quantization of the adjusted projected
//! component.

use std::fmt;

use rayon::prelude::*;

use crate::data::{DataError, Dataset};
use crate::linalg;
use crate::quant::{
    assign_vq, encode_pq, quantize_sq, reconstruct_pq, train_opq, train_sq, train_uq, train_vq,
    uq_code_range, PqCodebook, QuantError, Rotation, SqCodebook, UqParams,
};

#[derive(Debug)]
pub enum IndexError {
    Data(DataError),
    Quant(QuantError),
    Config(String),
    Format(String),
}

impl fmt::Display for IndexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexError::Data(e) => write!(f, "{e}"),
            IndexError::Quant(e) => write!(f, "{e}"),
            IndexError::Config(msg) => write!(f, "invalid config: {msg}"),
            IndexError::Format(msg) => write!(f, "bad index file: {msg}"),
        }
    }
}

impl std::error::Error for IndexError {}

impl From<DataError> for IndexError {
    fn from(e: DataError) -> Self {
        IndexError::Data(e)
    }
}

impl From<QuantError> for IndexError {
    fn from(e: QuantError) -> Self {
        IndexError::Quant(e)
    }
}

/// Quantization parameters shared by every pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig {
    /// Partition count of the inverted file (m).
    pub partitions: usize,
    /// PQ codebook count (n_B).
    pub subspaces: usize,
    /// Codewords per PQ codebook (n_W).
    pub codewords: usize,
    /// Bits for the uniform quantizer of projected components (l_UQ).
    pub uq_bits: u8,
    /// Bits for the scalar quantizer of scales (l_SQ).
    pub sq_bits: u8,
    /// Lloyd iterations for coarse and subspace quantizers.
    pub kmeans_iters: usize,
    /// Rotation/codebook alternations for the rotation trainer.
    pub opq_iters: usize,
    /// Quantile clipping for the uniform quantizer; (0.0, 1.0) disables.
    pub clip_quantiles: (f64, f64),
}

impl IndexConfig {
    pub fn new(partitions: usize, subspaces: usize, codewords: usize, uq_bits: u8, sq_bits: u8) -> Self {
        IndexConfig {
            partitions,
            subspaces,
            codewords,
            uq_bits,
            sq_bits,
            kmeans_iters: 10,
            opq_iters: 20,
            clip_quantiles: (0.01, 0.99),
        }
    }

    pub fn validate(&self, dim: usize, rows: usize) -> Result<(), IndexError> {
        if self.partitions == 0 || self.partitions > rows {
            return Err(IndexError::Config(format!(
                "partitions = {} out of range for {} rows",
                self.partitions, rows
            )));
        }
        if self.subspaces == 0 || self.subspaces > dim {
            return Err(IndexError::Config(format!(
                "subspaces = {} out of range for dimension {}",
                self.subspaces, dim
            )));
        }
        if self.codewords < 2 || self.codewords > u16::MAX as usize + 1 {
            return Err(IndexError::Config(format!(
                "codewords = {} unsupported",
                self.codewords
            )));
        }
        if self.uq_bits < 1 || self.uq_bits > 24 {
            return Err(IndexError::Config(format!("uq_bits = {}", self.uq_bits)));
        }
        if self.sq_bits < 1 || self.sq_bits > 8 {
            return Err(IndexError::Config(format!("sq_bits = {}", self.sq_bits)));
        }
        if !(0.0..=1.0).contains(&self.clip_quantiles.0)
            || !(0.0..=1.0).contains(&self.clip_quantiles.1)
            || self.clip_quantiles.0 > self.clip_quantiles.1
        {
            return Err(IndexError::Config(format!(
                "clip quantiles {:?}",
                self.clip_quantiles
            )));
        }
        Ok(())
    }

    /// Bits per PQ code.
    pub fn code_bits(&self) -> u32 {
        (self.codewords as f64).log2().ceil() as u32
    }
}

/// Unit-norm projection direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f32>);

impl Direction {
    pub fn new(v: Vec<f32>) -> Result<Self, IndexError> {
        let n = linalg::norm(&v);
        if (n - 1.0).abs() > 1e-6 {
            return Err(IndexError::Config(format!(
                "direction norm {n} is not 1"
            )));
        }
        Ok(Direction(v))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// Normalized partition center, the zero-extra-cost direction choice.
pub fn proj_dir_center(center: &[f32]) -> Result<Direction, IndexError> {
    let n = linalg::norm(center);
    if n == 0.0 {
        return Err(IndexError::Config("zero-norm partition center".into()));
    }
    Ok(Direction(
        center.iter().map(|x| (*x as f64 / n) as f32).collect(),
    ))
}

/// First principal direction of the uncentered query second moment,
/// sign-fixed so the first coordinate above noise level is positive.
pub fn proj_dir_query_pca(queries: &[&[f32]]) -> Result<Direction, IndexError> {
    if queries.len() < 2 {
        return Err(IndexError::Config(format!(
            "need at least 2 queries for a principal direction, got {}",
            queries.len()
        )));
    }
    let d = queries[0].len();
    let mut moment = vec![0.0f64; d * d];
    for q in queries {
        assert_eq!(q.len(), d);
        for i in 0..d {
            let qi = q[i] as f64;
            for j in 0..d {
                moment[i * d + j] += qi * q[j] as f64;
            }
        }
    }
    let inv = 1.0 / queries.len() as f64;
    moment.iter_mut().for_each(|x| *x *= inv);
    let v = linalg::dominant_eigenvector(&moment, d)
        .map_err(|e| IndexError::Config(format!("query moment matrix: {e}")))?;
    Ok(Direction(linalg::to_f32(&v)))
}

/// (x·v)·v, the component of x along the direction.
pub fn proj_parallel(v: &[f32], x: &[f32]) -> Vec<f32> {
    let t = linalg::dot(x, v);
    v.iter().map(|vi| (t * *vi as f64) as f32).collect()
}

/// x − (x·v)·v, the component of x orthogonal to the direction.
pub fn proj_orth(v: &[f32], x: &[f32]) -> Vec<f32> {
    let t = linalg::dot(x, v);
    x.iter()
        .zip(v.iter())
        .map(|(xi, vi)| (*xi as f64 - t * *vi as f64) as f32)
        .collect()
}

fn proj_orth_f64(v: &[f32], x: &[f64]) -> Vec<f64> {
    let mut t = 0.0f64;
    for (xi, vi) in x.iter().zip(v.iter()) {
        t += xi * *vi as f64;
    }
    x.iter()
        .zip(v.iter())
        .map(|(xi, vi)| xi - t * *vi as f64)
        .collect()
}

/// Norm-preserving scale: ‖o‖ over the norm of the reconstruction's
/// orthogonal component. A vanishing denominator yields scale 0; the
/// caller is expected to flag such entries.
pub fn compute_scale(o: &[f32], reconstruction: &[f32], v: &[f32]) -> f64 {
    let denom = linalg::norm(&proj_orth(v, reconstruction));
    if denom == 0.0 {
        return 0.0;
    }
    linalg::norm(o) / denom
}

/// Leak-adjusted projected component: (r − reconstruction)·v.
pub fn compute_z(r: &[f32], reconstruction: &[f32], v: &[f32]) -> f64 {
    let mut t = 0.0f64;
    for ((ri, mi), vi) in r.iter().zip(reconstruction.iter()).zip(v.iter()) {
        t += (*ri as f64 - *mi as f64) * *vi as f64;
    }
    t
}

/// How the per-partition projection direction is chosen.
pub enum ProjDirMode<'a> {
    /// Normalized partition center.
    Center,
    /// First principal direction of the queries routed to each
    /// partition; partitions with fewer than two such queries fall back
    /// to the center direction.
    QueryPca(&'a Dataset),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub center: Vec<f32>,
    pub direction: Direction,
    pub uq: UqParams,
    pub sq: SqCodebook,
    pub row_ids: Vec<u32>,
    /// Flattened, `subspaces` codes per entry.
    pub pq_codes: Vec<u16>,
    pub sq_codes: Vec<u8>,
    pub uq_codes: Vec<i32>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn pq_codes_of(&self, entry: usize, subspaces: usize) -> &[u16] {
        &self.pq_codes[entry * subspaces..(entry + 1) * subspaces]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LodMsqIndex {
    pub config: IndexConfig,
    pub dim: usize,
    pub rotation: Rotation,
    pub pq: PqCodebook,
    pub partitions: Vec<Partition>,
}

/// Exact per-entry values retained from the build, for verification.
#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    /// Exact scale per entry, partition-major.
    pub exact_scales: Vec<Vec<f64>>,
    /// Exact ‖o‖ per entry.
    pub exact_orth_norms: Vec<Vec<f64>>,
    /// Entries whose residual was exactly parallel to the direction.
    pub zero_orth_entries: usize,
    /// Entries whose reconstruction had no orthogonal component.
    pub zero_denominator_entries: usize,
    /// Partitions where query-PCA fell back to the center direction.
    pub pca_fallbacks: usize,
}

pub fn build_index(
    data: &Dataset,
    config: IndexConfig,
    mode: ProjDirMode<'_>,
    seed: u64,
) -> Result<LodMsqIndex, IndexError> {
    build_index_with_report(data, config, mode, seed).map(|(idx, _)| idx)
}

pub fn build_index_with_report(
    data: &Dataset,
    config: IndexConfig,
    mode: ProjDirMode<'_>,
    seed: u64,
) -> Result<(LodMsqIndex, BuildReport), IndexError> {
    config.validate(data.dim(), data.len())?;
    let dim = data.dim();

    // Coarse partitioning.
    let coarse = train_vq(data, config.partitions, config.kmeans_iters, seed)?;
    let assignments: Vec<usize> = (0..data.len())
        .into_par_iter()
        .map(|i| assign_vq(&coarse, data.row(i)).expect("dims match"))
        .collect();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); config.partitions];
    for (row, part) in assignments.iter().enumerate() {
        members[*part].push(row as u32);
    }

    // Projection directions.
    let mut report = BuildReport::default();
    let directions = match mode {
        ProjDirMode::Center => (0..config.partitions)
            .map(|p| proj_dir_center(coarse.center(p)))
            .collect::<Result<Vec<_>, _>>()?,
        ProjDirMode::QueryPca(queries) => {
            if queries.dim() != dim {
                return Err(IndexError::Data(DataError::BadDim {
                    query: queries.dim(),
                    dataset: dim,
                }));
            }
            let mut routed: Vec<Vec<&[f32]>> = vec![Vec::new(); config.partitions];
            for q in queries.rows() {
                let mut best = 0usize;
                let mut best_ip = f64::NEG_INFINITY;
                for p in 0..config.partitions {
                    let ip = linalg::dot(q, coarse.center(p));
                    if ip > best_ip {
                        best_ip = ip;
                        best = p;
                    }
                }
                routed[best].push(q);
            }
            let mut dirs = Vec::with_capacity(config.partitions);
            for p in 0..config.partitions {
                match proj_dir_query_pca(&routed[p]) {
                    Ok(d) => dirs.push(d),
                    Err(_) => {
                        report.pca_fallbacks += 1;
                        dirs.push(proj_dir_center(coarse.center(p))?);
                    }
                }
            }
            dirs
        }
    };

    // Normalized orthogonal components of every residual, in row order;
    // residuals exactly parallel to the direction contribute nothing to
    // the codebooks and get the all-zero code.
    let orth_normalized: Vec<Option<Vec<f32>>> = (0..data.len())
        .into_par_iter()
        .map(|row| {
            let p = assignments[row];
            let center = coarse.center(p);
            let v = directions[p].as_slice();
            let r: Vec<f64> = data
                .row(row)
                .iter()
                .zip(center.iter())
                .map(|(x, c)| *x as f64 - *c as f64)
                .collect();
            let o = proj_orth_f64(v, &r);
            let n = crate::linalg::norm_f64(&o);
            if n == 0.0 {
                None
            } else {
                Some(o.iter().map(|x| (x / n) as f32).collect())
            }
        })
        .collect();

    let training_rows: Vec<Vec<f32>> = orth_normalized.iter().flatten().cloned().collect();
    report.zero_orth_entries = data.len() - training_rows.len();

    let (rotation, pq) = if training_rows.len() >= config.codewords {
        let training = Dataset::from_rows(&training_rows)?;
        train_opq(
            &training,
            config.subspaces,
            config.codewords,
            config.opq_iters,
            config.kmeans_iters,
            seed,
        )?
    } else {
        // Degenerate: nothing to train on (for instance one point per
        // partition). All codes collapse to zero.
        (
            Rotation::identity(dim),
            PqCodebook::zeros(dim, config.subspaces, config.codewords),
        )
    };

    // Per-partition encoding. Partitions are independent; results are
    // collected in partition order.
    struct Encoded {
        partition: Partition,
        scales: Vec<f64>,
        orth_norms: Vec<f64>,
        zero_denoms: usize,
    }
    let encoded: Vec<Encoded> = (0..config.partitions)
        .into_par_iter()
        .map(|p| {
            let center = coarse.center(p).to_vec();
            let v = directions[p].as_slice();
            let rows = &members[p];
            let n = rows.len();
            let mut pq_codes = vec![0u16; n * config.subspaces];
            let mut scales = vec![0.0f64; n];
            let mut orth_norms = vec![0.0f64; n];
            let mut recon_rot: Vec<Vec<f64>> = Vec::with_capacity(n);
            let mut zero_denoms = 0usize;
            for (e, &row) in rows.iter().enumerate() {
                let x = data.row(row as usize);
                let r: Vec<f64> = x
                    .iter()
                    .zip(center.iter())
                    .map(|(a, c)| *a as f64 - *c as f64)
                    .collect();
                let o = proj_orth_f64(v, &r);
                let o_norm = crate::linalg::norm_f64(&o);
                orth_norms[e] = o_norm;
                let codes = match &orth_normalized[row as usize] {
                    Some(unit) => encode_pq(&pq, unit).expect("dims match"),
                    None => vec![0u16; config.subspaces],
                };
                let rotated = rotation.apply(&reconstruct_pq(&pq, &codes));
                pq_codes[e * config.subspaces..(e + 1) * config.subspaces]
                    .copy_from_slice(&codes);
                let denom = crate::linalg::norm_f64(&proj_orth_f64(v, &rotated));
                if o_norm == 0.0 {
                    scales[e] = 0.0;
                } else if denom == 0.0 {
                    scales[e] = 0.0;
                    zero_denoms += 1;
                } else {
                    scales[e] = o_norm / denom;
                }
                recon_rot.push(rotated);
            }

            let sq = train_sq(&scales, config.sq_bits).expect("non-empty partition scales");
            let mut sq_codes = vec![0u8; n];
            let mut zs = vec![0.0f64; n];
            for (e, &row) in rows.iter().enumerate() {
                let (code, level) = quantize_sq(&sq, scales[e]);
                sq_codes[e] = code as u8;
                let x = data.row(row as usize);
                // z = (r − level·rotated_reconstruction)·v
                let mut z = 0.0f64;
                for ((xi, ci), (mi, vi)) in x
                    .iter()
                    .zip(center.iter())
                    .zip(recon_rot[e].iter().zip(v.iter()))
                {
                    z += (*xi as f64 - *ci as f64 - level * mi) * *vi as f64;
                }
                zs[e] = z;
            }
            let uq = train_uq(&zs, config.uq_bits, config.clip_quantiles)
                .expect("non-empty partition projections");
            let uq_codes: Vec<i32> = zs.iter().map(|z| crate::quant::encode_uq(&uq, *z)).collect();

            Encoded {
                partition: Partition {
                    center,
                    direction: directions[p].clone(),
                    uq,
                    sq,
                    row_ids: rows.clone(),
                    pq_codes,
                    sq_codes,
                    uq_codes,
                },
                scales,
                orth_norms,
                zero_denoms,
            }
        })
        .collect();

    let mut partitions = Vec::with_capacity(config.partitions);
    for enc in encoded {
        report.exact_scales.push(enc.scales);
        report.exact_orth_norms.push(enc.orth_norms);
        report.zero_denominator_entries += enc.zero_denoms;
        partitions.push(enc.partition);
    }

    let index = LodMsqIndex {
        config,
        dim,
        rotation,
        pq,
        partitions,
    };
    debug_assert!(index.check_code_widths());
    Ok((index, report))
}

impl LodMsqIndex {
    pub fn len(&self) -> usize {
        self.partitions.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// φ_SQ(scale) · R · (PQ reconstruction) for a stored entry.
    pub fn msq_reconstruct(&self, partition: usize, entry: usize) -> Vec<f32> {
        let p = &self.partitions[partition];
        let codes = p.pq_codes_of(entry, self.config.subspaces);
        let level = p.sq.level(p.sq_codes[entry] as usize);
        let rotated = self.rotation.apply(&reconstruct_pq(&self.pq, codes));
        rotated.iter().map(|x| (level * x) as f32).collect()
    }

    /// Full reconstructed residual: the orthogonal-component
    /// reconstruction plus the decoded projected component along the
    /// direction.
    pub fn residual_reconstruction(&self, partition: usize, entry: usize) -> Vec<f32> {
        let p = &self.partitions[partition];
        let msq = self.msq_reconstruct(partition, entry);
        let z = crate::quant::decode_uq(&p.uq, p.uq_codes[entry]);
        msq.iter()
            .zip(p.direction.as_slice().iter())
            .map(|(m, vi)| (*m as f64 + z * *vi as f64) as f32)
            .collect()
    }

    /// All stored codes fit their declared bit widths.
    pub fn check_code_widths(&self) -> bool {
        let (uq_lo, uq_hi) = uq_code_range(self.config.uq_bits);
        let max_code = self.config.codewords as u16 - 1;
        self.partitions.iter().all(|p| {
            p.pq_codes.iter().all(|c| *c <= max_code)
                && p.sq_codes.iter().all(|c| (*c as usize) < p.sq.len())
                && p.uq_codes.iter().all(|c| *c >= uq_lo && *c <= uq_hi)
        })
    }

    /// Re-derives the invariants that tie the index back to its dataset:
    /// partition sizes sum to the dataset, every entry's nearest center
    /// is its own partition, and the residual decomposition identity
    /// r = (r·v)v + o holds.
    pub fn validate_against(&self, data: &Dataset) -> Result<(), IndexError> {
        if self.len() != data.len() {
            return Err(IndexError::Config(format!(
                "index holds {} entries for {} rows",
                self.len(),
                data.len()
            )));
        }
        let centers: Vec<f32> = self
            .partitions
            .iter()
            .flat_map(|p| p.center.iter().copied())
            .collect();
        let coarse = crate::quant::VqCodebook::from_centers(self.dim, centers);
        for (pi, p) in self.partitions.iter().enumerate() {
            for &row in &p.row_ids {
                let x = data.row(row as usize);
                let assigned = assign_vq(&coarse, x)?;
                if assigned != pi {
                    return Err(IndexError::Config(format!(
                        "row {row} stored in partition {pi} but assigns to {assigned}"
                    )));
                }
                let r: Vec<f32> = x
                    .iter()
                    .zip(p.center.iter())
                    .map(|(a, c)| a - c)
                    .collect();
                let v = p.direction.as_slice();
                let par = proj_parallel(v, &r);
                let orth = proj_orth(v, &r);
                for i in 0..self.dim {
                    let back = par[i] as f64 + orth[i] as f64;
                    if (back - r[i] as f64).abs() > 1e-4 {
                        return Err(IndexError::Config(format!(
                            "decomposition identity broken for row {row}"
                        )));
                    }
                }
            }
        }
        if !self.check_code_widths() {
            return Err(IndexError::Config("stored code out of range".into()));
        }
        Ok(())
    }
}

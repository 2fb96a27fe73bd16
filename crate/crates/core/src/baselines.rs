//! Comparison pipelines sharing the coarse partitioning and table-lookup
//! machinery: plain product quantization of residuals, its
//! rotation-learning variant, the distance-space conversion, multiscale
//! quantization without the decomposition, and the decomposition without
//! scales. The full pipeline delegates to the main index.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{DataError, Dataset};
use crate::index::{build_index, Direction, IndexConfig, IndexError, LodMsqIndex, ProjDirMode};
use crate::linalg;
use crate::quant::{
    assign_vq, encode_pq, encode_uq, quantize_sq, reconstruct_pq, train_opq, train_pq,
    train_sq, train_uq, train_vq, PqCodebook, Rotation, SqCodebook, UqParams,
};
use crate::search::{adc_ip, build_adc_tables, search, LookupTables, SearchResult};
use crate::topk::TopK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    MipsPq,
    MipsOpq,
    L2Opq,
    MipsMsq,
    MipsLodOpq,
    MipsLodMsq,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::MipsPq,
        BaselineKind::MipsOpq,
        BaselineKind::L2Opq,
        BaselineKind::MipsMsq,
        BaselineKind::MipsLodOpq,
        BaselineKind::MipsLodMsq,
    ];

    /// Kinds that spend bits on a uniformly quantized projected component.
    pub fn uses_uq(&self) -> bool {
        matches!(self, BaselineKind::MipsLodOpq | BaselineKind::MipsLodMsq)
    }

    /// Kinds that store a scalar-quantized scale per entry.
    pub fn uses_sq(&self) -> bool {
        matches!(self, BaselineKind::MipsMsq | BaselineKind::MipsLodMsq)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::MipsPq => "pq",
            BaselineKind::MipsOpq => "opq",
            BaselineKind::L2Opq => "l2_opq",
            BaselineKind::MipsMsq => "msq",
            BaselineKind::MipsLodOpq => "lod_opq",
            BaselineKind::MipsLodMsq => "lod_msq",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pq" => Ok(BaselineKind::MipsPq),
            "opq" => Ok(BaselineKind::MipsOpq),
            "l2_opq" => Ok(BaselineKind::L2Opq),
            "msq" => Ok(BaselineKind::MipsMsq),
            "lod_opq" => Ok(BaselineKind::MipsLodOpq),
            "lod_msq" => Ok(BaselineKind::MipsLodMsq),
            other => Err(format!(
                "unknown kind '{other}' (expected pq, opq, l2_opq, msq, lod_opq or lod_msq)"
            )),
        }
    }
}

/// One inverted-file partition of a baseline index. Which side fields
/// are populated depends on the kind.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePartition {
    pub center: Vec<f32>,
    pub direction: Option<Direction>,
    pub uq: Option<UqParams>,
    pub sq: Option<SqCodebook>,
    pub row_ids: Vec<u32>,
    pub pq_codes: Vec<u16>,
    pub sq_codes: Vec<u8>,
    pub uq_codes: Vec<i32>,
}

impl BaselinePartition {
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
pub struct BaselineIndex {
    pub kind: BaselineKind,
    pub config: IndexConfig,
    /// Dimension of the indexed space (original d, or d+1 after the
    /// distance-space augmentation).
    pub dim: usize,
    pub rotation: Rotation,
    pub pq: PqCodebook,
    pub partitions: Vec<BaselinePartition>,
    /// Max-norm divisor of the augmentation, when it was applied.
    pub l2_max_norm: Option<f32>,
}

impl BaselineIndex {
    pub fn len(&self) -> usize {
        self.partitions.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Any index the engine can build: the full pipeline or a baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyIndex {
    LodMsq(LodMsqIndex),
    Baseline(BaselineIndex),
}

impl AnyIndex {
    pub fn kind(&self) -> BaselineKind {
        match self {
            AnyIndex::LodMsq(_) => BaselineKind::MipsLodMsq,
            AnyIndex::Baseline(b) => b.kind,
        }
    }

    pub fn config(&self) -> &IndexConfig {
        match self {
            AnyIndex::LodMsq(i) => &i.config,
            AnyIndex::Baseline(b) => &b.config,
        }
    }

    pub fn partition_count(&self) -> usize {
        match self {
            AnyIndex::LodMsq(i) => i.partitions.len(),
            AnyIndex::Baseline(b) => b.partitions.len(),
        }
    }
}

/// Augment vectors by one dimension so that nearest-by-distance in the
/// new space equals maximum inner product in the old one:
/// x → [x/U; √(1 − (‖x‖/U)²)] with U the largest norm.
pub fn mips_to_l2_transform(data: &Dataset) -> (Dataset, f32) {
    let u = data
        .rows()
        .map(linalg::norm)
        .fold(0.0f64, f64::max);
    let u = if u == 0.0 { 1.0 } else { u };
    let mut flat = Vec::with_capacity(data.len() * (data.dim() + 1));
    for row in data.rows() {
        let mut norm_sq = 0.0f64;
        for &x in row {
            let scaled = x as f64 / u;
            norm_sq += scaled * scaled;
            flat.push(scaled as f32);
        }
        flat.push((1.0 - norm_sq).max(0.0).sqrt() as f32);
    }
    (
        Dataset::from_flat(data.dim() + 1, flat).expect("augmented rows stay finite"),
        u as f32,
    )
}

/// Matching query transform: q → [q/‖q‖; 0].
pub fn transform_query(q: &[f32]) -> Result<Vec<f32>, DataError> {
    let n = linalg::norm(q);
    if n == 0.0 {
        return Err(DataError::ZeroNormRow { record: 0 });
    }
    let mut out: Vec<f32> = q.iter().map(|x| (*x as f64 / n) as f32).collect();
    out.push(0.0);
    Ok(out)
}

fn all_unit_norm(data: &Dataset) -> bool {
    data.rows().all(|r| (linalg::norm(r) - 1.0).abs() <= 1e-4)
}

/// Residual of a row against its partition center, in f64.
fn residual(x: &[f32], center: &[f32]) -> Vec<f64> {
    x.iter()
        .zip(center.iter())
        .map(|(a, c)| *a as f64 - *c as f64)
        .collect()
}

fn to_f32_row(v: &[f64]) -> Vec<f32> {
    v.iter().map(|x| *x as f32).collect()
}

pub fn build_baseline(
    kind: BaselineKind,
    data: &Dataset,
    config: IndexConfig,
    mode: ProjDirMode<'_>,
    seed: u64,
) -> Result<AnyIndex, IndexError> {
    if kind == BaselineKind::MipsLodMsq {
        return Ok(AnyIndex::LodMsq(build_index(data, config, mode, seed)?));
    }

    // The distance-space pipeline indexes the augmented vectors, except
    // for unit-norm data where distance and inner-product rankings agree.
    let (indexed, l2_max_norm);
    let working: &Dataset = if kind == BaselineKind::L2Opq && !all_unit_norm(data) {
        let (aug, u) = mips_to_l2_transform(data);
        indexed = aug;
        l2_max_norm = Some(u);
        &indexed
    } else {
        l2_max_norm = None;
        data
    };

    config.validate(working.dim(), working.len())?;
    let dim = working.dim();

    let coarse = train_vq(working, config.partitions, config.kmeans_iters, seed)?;
    let assignments: Vec<usize> = (0..working.len())
        .into_par_iter()
        .map(|i| assign_vq(&coarse, working.row(i)).expect("dims match"))
        .collect();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); config.partitions];
    for (row, part) in assignments.iter().enumerate() {
        members[*part].push(row as u32);
    }

    // Per-partition projection directions for the decomposition kind.
    let directions: Option<Vec<Direction>> = if kind == BaselineKind::MipsLodOpq {
        let dirs = match mode {
            ProjDirMode::Center => (0..config.partitions)
                .map(|p| crate::index::proj_dir_center(coarse.center(p)))
                .collect::<Result<Vec<_>, _>>()?,
            ProjDirMode::QueryPca(queries) => {
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
                (0..config.partitions)
                    .map(|p| {
                        crate::index::proj_dir_query_pca(&routed[p])
                            .or_else(|_| crate::index::proj_dir_center(coarse.center(p)))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        Some(dirs)
    } else {
        None
    };

    // What the product quantizer is trained on depends on the kind:
    // residuals, normalized residuals, or orthogonal components.
    let training_rows: Vec<Option<Vec<f32>>> = (0..working.len())
        .into_par_iter()
        .map(|row| {
            let p = assignments[row];
            let r = residual(working.row(row), coarse.center(p));
            match kind {
                BaselineKind::MipsPq | BaselineKind::MipsOpq | BaselineKind::L2Opq => {
                    Some(to_f32_row(&r))
                }
                BaselineKind::MipsMsq => {
                    let n = linalg::norm_f64(&r);
                    if n == 0.0 {
                        None
                    } else {
                        Some(r.iter().map(|x| (x / n) as f32).collect())
                    }
                }
                BaselineKind::MipsLodOpq => {
                    let v = directions.as_ref().unwrap()[p].as_slice();
                    let mut t = 0.0f64;
                    for (xi, vi) in r.iter().zip(v.iter()) {
                        t += xi * *vi as f64;
                    }
                    Some(
                        r.iter()
                            .zip(v.iter())
                            .map(|(xi, vi)| (xi - t * *vi as f64) as f32)
                            .collect(),
                    )
                }
                BaselineKind::MipsLodMsq => unreachable!("delegated above"),
            }
        })
        .collect();

    let usable: Vec<Vec<f32>> = training_rows.iter().flatten().cloned().collect();
    let (rotation, pq) = if usable.len() >= config.codewords {
        let training = Dataset::from_rows(&usable)?;
        match kind {
            BaselineKind::MipsPq => (
                Rotation::identity(dim),
                train_pq(
                    &training,
                    config.subspaces,
                    config.codewords,
                    config.kmeans_iters,
                    seed,
                )?,
            ),
            _ => train_opq(
                &training,
                config.subspaces,
                config.codewords,
                config.opq_iters,
                config.kmeans_iters,
                seed,
            )?,
        }
    } else {
        (
            Rotation::identity(dim),
            PqCodebook::zeros(dim, config.subspaces, config.codewords),
        )
    };

    let partitions: Vec<BaselinePartition> = (0..config.partitions)
        .into_par_iter()
        .map(|p| {
            let center = coarse.center(p).to_vec();
            let rows = &members[p];
            let n = rows.len();
            let mut pq_codes = vec![0u16; n * config.subspaces];
            let mut scales = vec![0.0f64; n];
            let mut recon_rot: Vec<Vec<f64>> = Vec::with_capacity(n);
            for (e, &row) in rows.iter().enumerate() {
                let codes = match &training_rows[row as usize] {
                    Some(input) => encode_pq(&pq, input).expect("dims match"),
                    None => vec![0u16; config.subspaces],
                };
                let rotated = rotation.apply(&reconstruct_pq(&pq, &codes));
                pq_codes[e * config.subspaces..(e + 1) * config.subspaces]
                    .copy_from_slice(&codes);
                if kind == BaselineKind::MipsMsq {
                    let r = residual(working.row(row as usize), &center);
                    let r_norm = linalg::norm_f64(&r);
                    let recon_norm = linalg::norm_f64(&rotated);
                    scales[e] = if r_norm == 0.0 || recon_norm == 0.0 {
                        0.0
                    } else {
                        r_norm / recon_norm
                    };
                }
                recon_rot.push(rotated);
            }

            let (sq, sq_codes) = if kind.uses_sq() {
                let sq = train_sq(&scales, config.sq_bits).expect("non-empty partition");
                let codes: Vec<u8> = scales
                    .iter()
                    .map(|s| quantize_sq(&sq, *s).0 as u8)
                    .collect();
                (Some(sq), codes)
            } else {
                (None, Vec::new())
            };

            let (direction, uq, uq_codes) = if kind == BaselineKind::MipsLodOpq {
                let dir = directions.as_ref().unwrap()[p].clone();
                let v = dir.as_slice();
                let zs: Vec<f64> = rows
                    .iter()
                    .enumerate()
                    .map(|(e, &row)| {
                        let x = working.row(row as usize);
                        let mut z = 0.0f64;
                        for ((xi, ci), (mi, vi)) in x
                            .iter()
                            .zip(center.iter())
                            .zip(recon_rot[e].iter().zip(v.iter()))
                        {
                            z += (*xi as f64 - *ci as f64 - mi) * *vi as f64;
                        }
                        z
                    })
                    .collect();
                let uq = train_uq(&zs, config.uq_bits, config.clip_quantiles)
                    .expect("non-empty partition");
                let codes: Vec<i32> = zs.iter().map(|z| encode_uq(&uq, *z)).collect();
                (Some(dir), Some(uq), codes)
            } else {
                (None, None, Vec::new())
            };

            BaselinePartition {
                center,
                direction,
                uq,
                sq,
                row_ids: rows.clone(),
                pq_codes,
                sq_codes,
                uq_codes,
            }
        })
        .collect();

    Ok(AnyIndex::Baseline(BaselineIndex {
        kind,
        config,
        dim,
        rotation,
        pq,
        partitions,
        l2_max_norm,
    }))
}

/// Squared-distance lookup tables for one partition of the
/// distance-space pipeline: `table[b][j] = ‖q_res^(b) − codeword_j‖²`.
fn build_l2_tables(q_res: &[f64], pq: &PqCodebook) -> LookupTables {
    let n_w = pq.codewords();
    let mut values = Vec::with_capacity(pq.subspaces() * n_w);
    for b in 0..pq.subspaces() {
        let range = pq.subspace_range(b);
        let q_sub = &q_res[range];
        for j in 0..n_w {
            let mut acc = 0.0f64;
            for (qv, cv) in q_sub.iter().zip(pq.codeword(b, j).iter()) {
                let d = qv - *cv as f64;
                acc += d * d;
            }
            values.push(acc);
        }
    }
    LookupTables::from_values(n_w, values)
}

pub fn search_baseline(
    index: &AnyIndex,
    q: &[f32],
    k: usize,
    m_adc: usize,
) -> Result<SearchResult, DataError> {
    let b = match index {
        AnyIndex::LodMsq(i) => return search(i, q, k, m_adc),
        AnyIndex::Baseline(b) => b,
    };
    if k == 0 {
        return Err(DataError::BadK { k, n: b.len() });
    }
    if m_adc > b.partitions.len() {
        return Err(DataError::BadK {
            k: m_adc,
            n: b.partitions.len(),
        });
    }

    if b.kind == BaselineKind::L2Opq {
        return search_l2(b, q, k, m_adc);
    }
    if q.len() != b.dim {
        return Err(DataError::BadDim {
            query: q.len(),
            dataset: b.dim,
        });
    }

    let mut selected: Vec<(f64, usize)> = b
        .partitions
        .iter()
        .enumerate()
        .map(|(i, p)| (linalg::dot(q, &p.center), i))
        .collect();
    selected.sort_by(|a, c| c.0.total_cmp(&a.0).then_with(|| a.1.cmp(&c.1)));
    selected.truncate(m_adc);

    let q_rotated = b.rotation.apply_t(q);
    let tables = build_adc_tables(&q_rotated, &b.pq);
    let subspaces = b.config.subspaces;
    let mut top = TopK::new(k);
    for (p_ip, pi) in selected {
        let p = &b.partitions[pi];
        match b.kind {
            BaselineKind::MipsPq | BaselineKind::MipsOpq => {
                for e in 0..p.len() {
                    let score = adc_ip(&tables, p.pq_codes_of(e, subspaces)) + p_ip;
                    top.push(score, p.row_ids[e]);
                }
            }
            BaselineKind::MipsMsq => {
                let sq = p.sq.as_ref().expect("msq partitions carry scales");
                for e in 0..p.len() {
                    let level = sq.level(p.sq_codes[e] as usize);
                    let score = level * adc_ip(&tables, p.pq_codes_of(e, subspaces)) + p_ip;
                    top.push(score, p.row_ids[e]);
                }
            }
            BaselineKind::MipsLodOpq => {
                let v = p.direction.as_ref().expect("lod partitions carry directions");
                let uq = p.uq.as_ref().expect("lod partitions carry uq params");
                let q_dot_v = linalg::dot(q, v.as_slice());
                let step = q_dot_v * uq.step as f64;
                let base = q_dot_v * uq.offset as f64 + p_ip;
                for e in 0..p.len() {
                    let score = adc_ip(&tables, p.pq_codes_of(e, subspaces))
                        + step * p.uq_codes[e] as f64
                        + base;
                    top.push(score, p.row_ids[e]);
                }
            }
            BaselineKind::L2Opq | BaselineKind::MipsLodMsq => unreachable!(),
        }
    }
    Ok(top.into_sorted())
}

/// Distance-space search: partitions by smallest center distance, entries
/// ranked ascending by approximate squared distance. Scores in the result
/// are the approximate squared distances.
fn search_l2(b: &BaselineIndex, q: &[f32], k: usize, m_adc: usize) -> Result<SearchResult, DataError> {
    let q_hat: Vec<f32> = if b.l2_max_norm.is_some() {
        transform_query(q)?
    } else {
        q.to_vec()
    };
    if q_hat.len() != b.dim {
        return Err(DataError::BadDim {
            query: q_hat.len(),
            dataset: b.dim,
        });
    }
    let mut selected: Vec<(f64, usize)> = b
        .partitions
        .iter()
        .enumerate()
        .map(|(i, p)| (linalg::dist_sq(&q_hat, &p.center), i))
        .collect();
    selected.sort_by(|a, c| a.0.total_cmp(&c.0).then_with(|| a.1.cmp(&c.1)));
    selected.truncate(m_adc);

    let subspaces = b.config.subspaces;
    let mut top = TopK::new(k);
    for (_, pi) in selected {
        let p = &b.partitions[pi];
        // Residual tables are per partition: q_res = Rᵀ(q̂ − c).
        let diff: Vec<f32> = q_hat
            .iter()
            .zip(p.center.iter())
            .map(|(a, c)| a - c)
            .collect();
        let q_res = b.rotation.apply_t(&diff);
        let tables = build_l2_tables(&q_res, &b.pq);
        for e in 0..p.len() {
            let dist = adc_ip(&tables, p.pq_codes_of(e, subspaces));
            top.push(-dist, p.row_ids[e]);
        }
    }
    Ok(top
        .into_sorted()
        .into_iter()
        .map(|(id, neg)| (id, -neg))
        .collect())
}

/// Batch search, parallel over queries; output order matches query order.
pub fn search_baseline_batch(
    index: &AnyIndex,
    queries: &Dataset,
    k: usize,
    m_adc: usize,
) -> Result<Vec<SearchResult>, DataError> {
    (0..queries.len())
        .into_par_iter()
        .map(|i| search_baseline(index, queries.row(i), k, m_adc))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::brute_force_topk;
    use crate::synth;

    fn exact_search_check(kind: BaselineKind, set: synth::LosslessSet, seed: u64) {
        let index =
            build_baseline(kind, &set.data, set.config, ProjDirMode::Center, seed).unwrap();
        let queries = synth::gaussian_queries(40, set.data.dim(), seed ^ 0xabc);
        let m = index.partition_count();
        for qi in 0..queries.len() {
            let q = queries.row(qi);
            let got = search_baseline(&index, q, 10, m).unwrap();
            let want = brute_force_topk(&set.data, q, 10).unwrap();
            let got_ids: Vec<u32> = got.iter().map(|(id, _)| *id).collect();
            let want_ids: Vec<u32> = want.iter().map(|(id, _)| *id).collect();
            assert_eq!(got_ids, want_ids, "{kind} query {qi}");
        }
    }

    #[test]
    fn lossless_exact_for_pq() {
        exact_search_check(BaselineKind::MipsPq, synth::lossless_pq_residuals(288, 11), 1);
    }

    #[test]
    fn lossless_exact_for_opq() {
        exact_search_check(BaselineKind::MipsOpq, synth::lossless_pq_residuals(288, 12), 2);
    }

    #[test]
    fn lossless_exact_for_msq() {
        exact_search_check(BaselineKind::MipsMsq, synth::lossless_msq(288, 13), 3);
    }

    #[test]
    fn lossless_exact_for_lod_opq() {
        exact_search_check(BaselineKind::MipsLodOpq, synth::lossless_lod_opq(288, 14), 4);
    }

    #[test]
    fn lossless_exact_for_lod_msq() {
        exact_search_check(BaselineKind::MipsLodMsq, synth::lossless_lod_msq(288, 15), 5);
    }

    #[test]
    fn lossless_exact_for_l2_on_unit_data() {
        // Unit-norm rows: the augmentation is skipped and distance
        // ranking must equal inner-product ranking.
        let set = synth::lossless_l2(288, 16);
        let index = build_baseline(
            BaselineKind::L2Opq,
            &set.data,
            set.config,
            ProjDirMode::Center,
            6,
        )
        .unwrap();
        match &index {
            AnyIndex::Baseline(b) => assert!(b.l2_max_norm.is_none(), "transform must be skipped"),
            _ => unreachable!(),
        }
        let queries = synth::gaussian_queries(40, set.data.dim(), 77);
        let m = index.partition_count();
        for qi in 0..queries.len() {
            let q = queries.row(qi);
            let got = search_baseline(&index, q, 10, m).unwrap();
            let want = brute_force_topk(&set.data, q, 10).unwrap();
            let got_ids: Vec<u32> = got.iter().map(|(id, _)| *id).collect();
            let want_ids: Vec<u32> = want.iter().map(|(id, _)| *id).collect();
            assert_eq!(got_ids, want_ids, "query {qi}");
        }
    }

    #[test]
    fn opq_with_identity_rotation_reproduces_pq() {
        let set = synth::lossless_pq_residuals(288, 21);
        let mut config = set.config;
        config.opq_iters = 0; // rotation pinned to the identity
        let pq_idx =
            build_baseline(BaselineKind::MipsPq, &set.data, config, ProjDirMode::Center, 9)
                .unwrap();
        let opq_idx =
            build_baseline(BaselineKind::MipsOpq, &set.data, config, ProjDirMode::Center, 9)
                .unwrap();
        let queries = synth::gaussian_queries(20, set.data.dim(), 5);
        for qi in 0..queries.len() {
            let q = queries.row(qi);
            let a = search_baseline(&pq_idx, q, 10, 4).unwrap();
            let b = search_baseline(&opq_idx, q, 10, 4).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lod_msq_kind_delegates_to_searcher() {
        let set = synth::lossless_lod_msq(288, 23);
        let index = build_baseline(
            BaselineKind::MipsLodMsq,
            &set.data,
            set.config,
            ProjDirMode::Center,
            3,
        )
        .unwrap();
        let inner = match &index {
            AnyIndex::LodMsq(i) => i,
            _ => panic!("wrong variant"),
        };
        let queries = synth::gaussian_queries(15, set.data.dim(), 8);
        for qi in 0..queries.len() {
            let q = queries.row(qi);
            let via_baseline = search_baseline(&index, q, 7, 3).unwrap();
            let direct = search(inner, q, 7, 3).unwrap();
            assert_eq!(via_baseline, direct);
        }
    }

    #[test]
    fn candidates_come_only_from_selected_partitions() {
        let data = synth::clustered(600, 12, 30, 31);
        let mut config = IndexConfig::new(10, 4, 8, 6, 4);
        config.opq_iters = 2;
        for kind in BaselineKind::ALL {
            let index =
                build_baseline(kind, &data, config, ProjDirMode::Center, 7).unwrap();
            let queries = synth::gaussian_queries(5, 12, 9);
            for qi in 0..queries.len() {
                let q = queries.row(qi);
                let out = search_baseline(&index, q, 20, 3).unwrap();
                let allowed: Vec<u32> = match &index {
                    AnyIndex::LodMsq(i) => {
                        let sel = crate::search::select_partitions(q, i, 3).unwrap();
                        sel.iter()
                            .flat_map(|(_, p)| i.partitions[*p].row_ids.clone())
                            .collect()
                    }
                    AnyIndex::Baseline(b) => {
                        let asc = b.kind == BaselineKind::L2Opq;
                        let q_hat: Vec<f32> = if asc && b.l2_max_norm.is_some() {
                            transform_query(q).unwrap()
                        } else {
                            q.to_vec()
                        };
                        let mut sel: Vec<(f64, usize)> = b
                            .partitions
                            .iter()
                            .enumerate()
                            .map(|(i, p)| {
                                let key = if asc {
                                    linalg::dist_sq(&q_hat, &p.center)
                                } else {
                                    linalg::dot(&q_hat, &p.center)
                                };
                                (key, i)
                            })
                            .collect();
                        if asc {
                            sel.sort_by(|a, c| a.0.total_cmp(&c.0).then_with(|| a.1.cmp(&c.1)));
                        } else {
                            sel.sort_by(|a, c| c.0.total_cmp(&a.0).then_with(|| a.1.cmp(&c.1)));
                        }
                        sel.truncate(3);
                        sel.iter()
                            .flat_map(|(_, p)| b.partitions[*p].row_ids.clone())
                            .collect()
                    }
                };
                for (id, _) in &out {
                    assert!(allowed.contains(id), "{kind}: id {id} outside selection");
                }
            }
        }
    }

    #[test]
    fn transform_examples() {
        let data = Dataset::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let (aug, u) = mips_to_l2_transform(&data);
        assert_eq!(u, 5.0);
        // The max-norm row augments to zero.
        assert_eq!(aug.row(0), &[0.6, 0.8, 0.0]);
        // The zero row augments to a pure last coordinate.
        assert_eq!(aug.row(1), &[0.0, 0.0, 1.0]);
        for row in aug.rows() {
            assert!((linalg::norm(row) - 1.0).abs() < 1e-6);
        }
        assert!(transform_query(&[0.0, 0.0]).is_err());
        assert_eq!(transform_query(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8, 0.0]);
    }

    #[test]
    fn transform_preserves_argmax() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let rows: Vec<Vec<f32>> = (0..100)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let (aug, _) = mips_to_l2_transform(&data);
        for _ in 0..50 {
            let q: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if linalg::norm(&q) == 0.0 {
                continue;
            }
            let mips = brute_force_topk(&data, &q, 1).unwrap()[0].0;
            let q_hat = transform_query(&q).unwrap();
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for (i, row) in aug.rows().enumerate() {
                let d = linalg::dist_sq(&q_hat, row);
                if d < best_d {
                    best_d = d;
                    best = i as u32;
                }
            }
            assert_eq!(best, mips);
        }
    }
}

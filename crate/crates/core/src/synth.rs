//! Synthetic dataset generators.
//!
//! `clustered` and `noisy_queries` produce realistic benchmark inputs.
//! The `lossless_*` generators build datasets whose residuals are exactly
//! representable by the corresponding quantization pipeline: every
//! coordinate is a short dyadic float, residuals cancel pairwise inside
//! each partition so the coarse centers are recovered bit-exactly, each
//! partition's scales hit at most 2^l_SQ distinct values, and projected
//! components sit exactly on the trained uniform grid. On such data the
//! whole index round-trips with zero reconstruction error, which gives
//! search an exact brute-force oracle.

use rand::Rng;

use crate::data::Dataset;
use crate::index::IndexConfig;
use crate::rng::{normal, rng_from_seed};

/// Gaussian clusters shaped like real embedding tables: cluster centers
/// live in a low-dimensional subspace (topical structure, so partition
/// centers carry real signal even at high dimension) and per-cluster
/// radii vary so residual norms spread.
pub fn clustered(n: usize, dim: usize, clusters: usize, seed: u64) -> Dataset {
    assert!(n >= clusters && clusters >= 1);
    let mut rng = rng_from_seed(seed);
    let rank = dim.min(16);
    let basis: Vec<Vec<f64>> = (0..rank)
        .map(|_| crate::rng::unit_vector(&mut rng, dim))
        .collect();
    let center_scale = 6.0;
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| {
            let weights: Vec<f64> = (0..rank).map(|_| normal(&mut rng)).collect();
            (0..dim)
                .map(|j| {
                    center_scale
                        * weights
                            .iter()
                            .zip(basis.iter())
                            .map(|(w, b)| w * b[j])
                            .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let radii: Vec<f64> = (0..clusters)
        .map(|_| 0.7 * (0.6 * normal(&mut rng)).exp())
        .collect();
    let mut flat = Vec::with_capacity(n * dim);
    for i in 0..n {
        let c = i % clusters;
        for j in 0..dim {
            flat.push((centers[c][j] + radii[c] * normal(&mut rng)) as f32);
        }
    }
    Dataset::from_flat(dim, flat).expect("finite by construction")
}

/// Queries drawn as noisy copies of database rows.
pub fn noisy_queries(data: &Dataset, count: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed ^ 0x9e3779b97f4a7c15);
    let mut flat = Vec::with_capacity(count * data.dim());
    for _ in 0..count {
        let row = data.row(rng.gen_range(0..data.len()));
        for &x in row {
            flat.push((x as f64 + noise * normal(&mut rng)) as f32);
        }
    }
    Dataset::from_flat(data.dim(), flat).expect("finite by construction")
}

/// A dataset paired with the index parameters it was built for.
pub struct LosslessSet {
    pub data: Dataset,
    pub config: IndexConfig,
}

const DIM: usize = 32;
const BLOCKS: usize = 4; // PQ subspaces, 8 dims each
const PATTERNS: usize = 16; // sign patterns per block = n_W
const AXES: usize = 4; // partition centers sit on coordinates 0..4

/// Support coordinates of block `b` (4 of its 8 dims, never an axis).
fn block_support(b: usize) -> [usize; 4] {
    let start = if b == 0 { 4 } else { b * 8 };
    [start, start + 1, start + 2, start + 3]
}

/// Writes sign pattern `t` of block `b` scaled by `h` into `out`.
fn apply_pattern(out: &mut [f32], b: usize, t: usize, h: f32) {
    for (bit, coord) in block_support(b).into_iter().enumerate() {
        out[coord] = if t >> bit & 1 == 1 { h } else { -h };
    }
}

/// Unit vector from one sign pattern per block, coordinates ±1/4.
fn unit_pattern(ts: [usize; BLOCKS]) -> Vec<f32> {
    let mut u = vec![0.0f32; DIM];
    for (b, t) in ts.into_iter().enumerate() {
        apply_pattern(&mut u, b, t, 0.25);
    }
    u
}

fn negated(ts: [usize; BLOCKS]) -> [usize; BLOCKS] {
    ts.map(|t| PATTERNS - 1 - t)
}

fn random_patterns(rng: &mut impl Rng) -> [usize; BLOCKS] {
    [(); BLOCKS].map(|_| rng.gen_range(0..PATTERNS))
}

/// Scale levels (8+j)/16 for j in 0..16: dyadic, so products with the
/// ±1/4 pattern coordinates stay exact in f32.
fn scale_level(j: usize) -> f32 {
    (8 + j) as f32 / 16.0
}

const UQ_STEP: f32 = 1.0 / 64.0;

fn base_config(opq_iters: usize) -> IndexConfig {
    let mut config = IndexConfig::new(AXES, BLOCKS, PATTERNS, 8, 4);
    config.kmeans_iters = 15;
    config.opq_iters = opq_iters;
    config.clip_quantiles = (0.0, 1.0);
    config
}

fn axis_center(partition: usize) -> (usize, f32) {
    (partition, 512.0 * (partition + 1) as f32)
}

/// Entry blueprint: residual = scale · unit_pattern + z · e_axis.
struct Entry {
    ts: [usize; BLOCKS],
    scale: f32,
    z_code: i32,
}

/// Per-partition entries whose z codes span the full signed 8-bit range
/// and sum to zero, and whose pattern parts cancel pairwise.
fn partition_entries(per_partition: usize, diagonal_start: bool, rng: &mut impl Rng) -> Vec<Entry> {
    assert!(per_partition >= 36 && per_partition % 2 == 0);
    let mut entries = Vec::with_capacity(per_partition);
    // One quadruple pins codes -128 and 127 while keeping Σz = 0:
    // -128 + 127 + 64 - 63 = 0.
    let qa = random_patterns(rng);
    let qb = random_patterns(rng);
    entries.push(Entry { ts: qa, scale: scale_level(0), z_code: -128 });
    entries.push(Entry { ts: negated(qa), scale: scale_level(0), z_code: 127 });
    entries.push(Entry { ts: qb, scale: scale_level(1), z_code: 64 });
    entries.push(Entry { ts: negated(qb), scale: scale_level(1), z_code: -63 });
    let pairs = (per_partition - 4) / 2;
    for p in 0..pairs {
        // The first 16 pairs of the first partition walk the diagonal
        // patterns so every block sees all 16 codewords.
        let ts = if diagonal_start && p < PATTERNS {
            [p; BLOCKS]
        } else {
            random_patterns(rng)
        };
        let scale = scale_level(p % PATTERNS);
        let z_code = rng.gen_range(-127..=127);
        entries.push(Entry { ts, scale, z_code });
        entries.push(Entry { ts: negated(ts), scale, z_code: -z_code });
    }
    entries
}

/// Dataset for the full LOD+MSQ pipeline: per-partition direction is the
/// center axis, orthogonal components are scaled sign patterns, projected
/// components sit on a shared uniform grid.
pub fn lossless_lod_msq(n: usize, seed: u64) -> LosslessSet {
    assert!(n % (2 * AXES) == 0 && n / AXES >= 36, "need n = 2·4·k, ≥ 144");
    let mut rng = rng_from_seed(seed);
    let per_partition = n / AXES;
    let mut rows = Vec::with_capacity(n);
    for part in 0..AXES {
        let (axis, s) = axis_center(part);
        for e in partition_entries(per_partition, part == 0, &mut rng) {
            let mut x = unit_pattern(e.ts);
            for v in x.iter_mut() {
                *v *= e.scale;
            }
            x[axis] += s + e.z_code as f32 * UQ_STEP;
            rows.push(x);
        }
    }
    LosslessSet {
        data: Dataset::from_rows(&rows).unwrap(),
        config: base_config(0),
    }
}

/// Dataset whose raw residuals take at most 16 distinct values per PQ
/// subspace: exact for pipelines that product-quantize residuals
/// directly (with the rotation pinned to the identity).
pub fn lossless_pq_residuals(n: usize, seed: u64) -> LosslessSet {
    assert!(n % (2 * AXES) == 0 && n / AXES >= 4);
    let mut rng = rng_from_seed(seed);
    let per_partition = n / AXES;
    let mut rows = Vec::with_capacity(n);
    for part in 0..AXES {
        let (axis, s) = axis_center(part);
        for p in 0..per_partition / 2 {
            let ts = if part == 0 && p < PATTERNS {
                [p; BLOCKS]
            } else {
                random_patterns(&mut rng)
            };
            for ts in [ts, negated(ts)] {
                let mut x = unit_pattern(ts);
                x[axis] += s;
                rows.push(x);
            }
        }
    }
    LosslessSet {
        data: Dataset::from_rows(&rows).unwrap(),
        config: base_config(0),
    }
}

/// Dataset for the scale-times-normalized-residual pipeline without the
/// orthogonal decomposition: residuals are scale · unit pattern.
pub fn lossless_msq(n: usize, seed: u64) -> LosslessSet {
    assert!(n % (2 * AXES) == 0 && n / AXES >= 32);
    let mut rng = rng_from_seed(seed);
    let per_partition = n / AXES;
    let mut rows = Vec::with_capacity(n);
    for part in 0..AXES {
        let (axis, s) = axis_center(part);
        for p in 0..per_partition / 2 {
            let ts = if part == 0 && p < PATTERNS {
                [p; BLOCKS]
            } else {
                random_patterns(&mut rng)
            };
            let scale = scale_level(p % PATTERNS);
            for ts in [ts, negated(ts)] {
                let mut x = unit_pattern(ts);
                for v in x.iter_mut() {
                    *v *= scale;
                }
                x[axis] += s;
                rows.push(x);
            }
        }
    }
    LosslessSet {
        data: Dataset::from_rows(&rows).unwrap(),
        config: base_config(0),
    }
}

/// Dataset for the decomposition-without-scales pipeline: orthogonal
/// components share a single global scale so the unnormalized subspace
/// values stay within 16 distinct points, and projected components sit
/// on the uniform grid.
pub fn lossless_lod_opq(n: usize, seed: u64) -> LosslessSet {
    assert!(n % (2 * AXES) == 0 && n / AXES >= 36);
    let mut rng = rng_from_seed(seed);
    let per_partition = n / AXES;
    let mut rows = Vec::with_capacity(n);
    for part in 0..AXES {
        let (axis, s) = axis_center(part);
        for e in partition_entries(per_partition, part == 0, &mut rng) {
            let mut x = unit_pattern(e.ts);
            x[axis] += s + e.z_code as f32 * UQ_STEP;
            rows.push(x);
        }
    }
    LosslessSet {
        data: Dataset::from_rows(&rows).unwrap(),
        config: base_config(0),
    }
}

/// Unit-norm dataset (within f32 rounding) for the distance-space
/// pipeline: centers β·e_axis with β = 15/16, residuals orthogonal to
/// the center with a shared norm, one sign coordinate per block.
pub fn lossless_l2(n: usize, seed: u64) -> LosslessSet {
    assert!(n % (2 * AXES) == 0 && n / AXES >= 2);
    let mut rng = rng_from_seed(seed);
    let beta = 15.0f32 / 16.0;
    // ρ² = 1 − β², four support coordinates of ±ρ/2 each.
    let h = ((1.0 - (beta as f64) * (beta as f64)) / 4.0).sqrt() as f32;
    let per_partition = n / AXES;
    let mut rows = Vec::with_capacity(n);
    for part in 0..AXES {
        for p in 0..per_partition / 2 {
            let signs: [bool; BLOCKS] = if part == 0 && p < 2 {
                [p == 1; BLOCKS]
            } else {
                [(); BLOCKS].map(|_| rng.gen_bool(0.5))
            };
            for flip in [false, true] {
                let mut x = vec![0.0f32; DIM];
                for (b, s) in signs.into_iter().enumerate() {
                    let coord = block_support(b)[0];
                    x[coord] = if s != flip { h } else { -h };
                }
                x[part] += beta;
                rows.push(x);
            }
        }
    }
    let mut config = base_config(0);
    config.uq_bits = 8;
    LosslessSet {
        data: Dataset::from_rows(&rows).unwrap(),
        config,
    }
}

/// Random dense queries matched to the lossless sets' dimension.
pub fn gaussian_queries(count: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed ^ 0x517cc1b727220a95);
    let mut flat = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        flat.push(normal(&mut rng) as f32);
    }
    Dataset::from_flat(dim, flat).expect("finite by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::brute_force_topk;
    use crate::index::{build_index_with_report, ProjDirMode};
    use crate::search::search;

    #[test]
    fn clustered_has_requested_shape() {
        let d = clustered(500, 12, 20, 1);
        assert_eq!(d.len(), 500);
        assert_eq!(d.dim(), 12);
        let q = noisy_queries(&d, 30, 0.05, 2);
        assert_eq!(q.len(), 30);
        assert_eq!(q.dim(), 12);
    }

    #[test]
    fn lossless_lod_msq_roundtrips_exactly() {
        let set = lossless_lod_msq(288, 41);
        let (index, report) =
            build_index_with_report(&set.data, set.config, ProjDirMode::Center, 1).unwrap();
        index.validate_against(&set.data).unwrap();
        assert_eq!(report.zero_orth_entries, 0);
        assert_eq!(report.zero_denominator_entries, 0);

        // Zero reconstruction error entry by entry.
        for (pi, p) in index.partitions.iter().enumerate() {
            for e in 0..p.len() {
                let row = p.row_ids[e] as usize;
                let x = set.data.row(row);
                let recon = index.residual_reconstruction(pi, e);
                for j in 0..set.data.dim() {
                    let back = p.center[j] as f64 + recon[j] as f64;
                    assert_eq!(
                        back, x[j] as f64,
                        "row {row} coord {j}: {back} != {}",
                        x[j]
                    );
                }
            }
        }
    }

    #[test]
    fn lossless_lod_msq_search_equals_brute_force() {
        let set = lossless_lod_msq(288, 42);
        let index = crate::index::build_index(&set.data, set.config, ProjDirMode::Center, 2).unwrap();
        let queries = gaussian_queries(50, DIM, 7);
        let m = index.partitions.len();
        for qi in 0..queries.len() {
            let q = queries.row(qi);
            let got = search(&index, q, 10, m).unwrap();
            let want = brute_force_topk(&set.data, q, 10).unwrap();
            let got_ids: Vec<u32> = got.iter().map(|(id, _)| *id).collect();
            let want_ids: Vec<u32> = want.iter().map(|(id, _)| *id).collect();
            assert_eq!(got_ids, want_ids, "query {qi}");
            for ((_, gs), (_, ws)) in got.iter().zip(want.iter()) {
                assert!((gs - ws).abs() <= 1e-5 * ws.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lossless_variants_have_exact_residual_structure() {
        // Each generator's residuals must cancel pairwise per partition.
        for (name, set) in [
            ("lod_msq", lossless_lod_msq(288, 1)),
            ("pq", lossless_pq_residuals(288, 2)),
            ("msq", lossless_msq(288, 3)),
            ("lod_opq", lossless_lod_opq(288, 4)),
            ("l2", lossless_l2(288, 5)),
        ] {
            let n = set.data.len();
            let per = n / AXES;
            for part in 0..AXES {
                let mut sums = vec![0.0f64; DIM];
                for e in 0..per {
                    let row = set.data.row(part * per + e);
                    for j in 0..DIM {
                        sums[j] += row[j] as f64;
                    }
                }
                for (j, s) in sums.iter().enumerate() {
                    let mean = s / per as f64;
                    let center_exact = match name {
                        "l2" => {
                            if j == part {
                                15.0 / 16.0
                            } else {
                                0.0
                            }
                        }
                        _ => {
                            if j == part {
                                512.0 * (part + 1) as f64
                            } else {
                                0.0
                            }
                        }
                    };
                    assert_eq!(mean, center_exact, "{name} partition {part} coord {j}");
                }
            }
        }
    }

    #[test]
    fn lossless_l2_rows_are_unit_norm() {
        let set = lossless_l2(288, 9);
        for row in set.data.rows() {
            let n = crate::linalg::norm(row);
            assert!((n - 1.0).abs() < 1e-4, "norm {n}");
        }
    }
}

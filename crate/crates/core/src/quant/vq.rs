//! Vector quantization trained with Lloyd's algorithm from k-means++
//! seeding.
//!
//! Training keeps centers in f64 and only rounds to f32 when the final
//! codebook is assembled. Assignment passes run in parallel but every
//! reduction happens sequentially in row order, so results are identical
//! for any thread count.

use rand::Rng;
use rayon::prelude::*;

use super::QuantError;
use crate::data::Dataset;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct VqCodebook {
    dim: usize,
    centers: Vec<f32>,
}

impl VqCodebook {
    pub fn from_centers(dim: usize, centers: Vec<f32>) -> Self {
        assert!(dim > 0 && centers.len() % dim == 0);
        VqCodebook { dim, centers }
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, i: usize) -> &[f32] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centers_flat(&self) -> &[f32] {
        &self.centers
    }
}

#[inline]
fn dist_sq_f64(x: &[f32], c: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (a, b) in x.iter().zip(c.iter()) {
        let d = *a as f64 - b;
        acc += d * d;
    }
    acc
}

/// Index of the nearest center, ties to the smaller index.
fn nearest(x: &[f32], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist_sq_f64(x, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first center uniform, the rest weighted by the
/// squared distance to the closest chosen center.
fn seed_centers(data: &Dataset, m: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(m);
    let first = rng.gen_range(0..n);
    chosen.push(first);
    centers.push(data.row(first).iter().map(|x| *x as f64).collect());

    let mut dist: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| dist_sq_f64(data.row(i), &centers[0]))
        .collect();

    while centers.len() < m {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut picked = n - 1;
            for (i, w) in dist.iter().enumerate() {
                acc += w;
                if acc >= r {
                    picked = i;
                    break;
                }
            }
            picked
        } else {
            // Every point coincides with a chosen center; take the first
            // index not yet used (duplicates as a last resort).
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        let center: Vec<f64> = data.row(pick).iter().map(|x| *x as f64).collect();
        dist = dist
            .par_iter()
            .enumerate()
            .map(|(i, d)| d.min(dist_sq_f64(data.row(i), &center)))
            .collect();
        centers.push(center);
    }
    centers
}

/// One assignment pass. Returns per-row (cluster, squared distance).
fn assign_all(data: &Dataset, centers: &[Vec<f64>]) -> Vec<(usize, f64)> {
    (0..data.len())
        .into_par_iter()
        .map(|i| nearest(data.row(i), centers))
        .collect()
}

/// Recompute centers as cluster means; empty clusters are re-seeded from
/// the farthest point of the largest cluster.
fn update_centers(
    data: &Dataset,
    centers: &mut [Vec<f64>],
    assignments: &mut [(usize, f64)],
) {
    let dim = data.dim();
    let m = centers.len();
    let mut sums = vec![vec![0.0f64; dim]; m];
    let mut counts = vec![0usize; m];
    for (i, (c, _)) in assignments.iter().enumerate() {
        counts[*c] += 1;
        let row = data.row(i);
        let sum = &mut sums[*c];
        for j in 0..dim {
            sum[j] += row[j] as f64;
        }
    }
    for c in 0..m {
        if counts[c] == 0 {
            continue;
        }
        for j in 0..dim {
            centers[c][j] = sums[c][j] / counts[c] as f64;
        }
    }
    // Repair empties after the means are in place.
    for c in 0..m {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..m)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        if counts[donor] == 0 {
            continue; // nothing to split, keep the stale center
        }
        let mut far_row = None;
        let mut far_d = -1.0f64;
        for (i, (a, _)) in assignments.iter().enumerate() {
            if *a == donor {
                let d = dist_sq_f64(data.row(i), &centers[donor]);
                if d > far_d {
                    far_d = d;
                    far_row = Some(i);
                }
            }
        }
        let row = far_row.expect("donor cluster is non-empty");
        centers[c] = data.row(row).iter().map(|x| *x as f64).collect();
        counts[assignments[row].0] -= 1;
        assignments[row] = (c, 0.0);
        counts[c] = 1;
    }
}

/// Lloyd iterations starting from the given centers. Returns the final
/// centers plus the distortion measured at the top of every iteration.
fn lloyd(
    data: &Dataset,
    mut centers: Vec<Vec<f64>>,
    max_iters: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut trace = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..max_iters {
        let mut assignments = assign_all(data, &centers);
        trace.push(assignments.iter().map(|(_, d)| d).sum());
        let ids: Vec<usize> = assignments.iter().map(|(c, _)| *c).collect();
        if prev.as_ref() == Some(&ids) {
            break;
        }
        update_centers(data, &mut centers, &mut assignments);
        prev = Some(assignments.iter().map(|(c, _)| *c).collect());
    }
    (centers, trace)
}

pub fn train_vq(
    data: &Dataset,
    m: usize,
    max_iters: usize,
    seed: u64,
) -> Result<VqCodebook, QuantError> {
    train_vq_traced(data, m, max_iters, seed).map(|(cb, _)| cb)
}

/// Same as [`train_vq`] but also returns the per-iteration distortion,
/// which is non-increasing.
pub fn train_vq_traced(
    data: &Dataset,
    m: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(VqCodebook, Vec<f64>), QuantError> {
    if m == 0 {
        return Err(QuantError::NoCenters);
    }
    if m > data.len() {
        return Err(QuantError::TooManyCenters { m, n: data.len() });
    }
    let mut rng = rng_from_seed(seed);
    let centers = seed_centers(data, m, &mut rng);
    let (centers, trace) = lloyd(data, centers, max_iters);
    let mut flat = Vec::with_capacity(m * data.dim());
    for c in &centers {
        flat.extend(c.iter().map(|x| *x as f32));
    }
    Ok((VqCodebook::from_centers(data.dim(), flat), trace))
}

/// Refine an existing codebook in place with more Lloyd iterations.
/// Used by the rotation trainer, which must not re-seed between
/// alternations or the objective could jump upward.
pub(crate) fn refine_vq(cb: &VqCodebook, data: &Dataset, iters: usize) -> VqCodebook {
    let centers: Vec<Vec<f64>> = (0..cb.len())
        .map(|i| cb.center(i).iter().map(|x| *x as f64).collect())
        .collect();
    let (centers, _) = lloyd(data, centers, iters);
    let mut flat = Vec::with_capacity(cb.len() * data.dim());
    for c in &centers {
        flat.extend(c.iter().map(|x| *x as f32));
    }
    VqCodebook::from_centers(data.dim(), flat)
}

/// Nearest-center assignment, ties to the smaller index.
pub fn assign_vq(cb: &VqCodebook, x: &[f32]) -> Result<usize, QuantError> {
    if x.len() != cb.dim() {
        return Err(QuantError::BadDim {
            expected: cb.dim(),
            actual: x.len(),
        });
    }
    Ok(nearest_f32(cb, x))
}

#[inline]
pub(crate) fn nearest_f32(cb: &VqCodebook, x: &[f32]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for i in 0..cb.len() {
        let d = crate::linalg::dist_sq(x, cb.center(i));
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
fn distortion(cb: &VqCodebook, data: &Dataset) -> f64 {
    let per_row: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let c = nearest_f32(cb, data.row(i));
            crate::linalg::dist_sq(data.row(i), cb.center(c))
        })
        .collect();
    per_row.iter().sum()
}

//! Product quantization: an independent vector quantizer per contiguous
//! subspace slice. When the dimension does not divide evenly, the last
//! subspace absorbs the remainder.

use std::ops::Range;

use super::vq::{nearest_f32, refine_vq, train_vq, VqCodebook};
use super::QuantError;
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    bases: Vec<VqCodebook>,
}

/// Contiguous subspace slices of a d-dimensional vector.
pub fn subspace_ranges(dim: usize, subspaces: usize) -> Vec<Range<usize>> {
    let base = dim / subspaces;
    (0..subspaces)
        .map(|b| {
            let start = b * base;
            let end = if b + 1 == subspaces { dim } else { start + base };
            start..end
        })
        .collect()
}

impl PqCodebook {
    pub fn from_bases(dim: usize, bases: Vec<VqCodebook>) -> Self {
        assert!(!bases.is_empty());
        let total: usize = bases.iter().map(|b| b.dim()).sum();
        assert_eq!(total, dim);
        PqCodebook { dim, bases }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subspaces(&self) -> usize {
        self.bases.len()
    }

    pub fn codewords(&self) -> usize {
        self.bases[0].len()
    }

    pub fn subspace_range(&self, b: usize) -> Range<usize> {
        subspace_ranges(self.dim, self.bases.len())[b].clone()
    }

    pub fn codeword(&self, b: usize, j: usize) -> &[f32] {
        self.bases[b].center(j)
    }

    pub fn base(&self, b: usize) -> &VqCodebook {
        &self.bases[b]
    }

    /// Codebook whose codewords are all zero; encodes everything to code
    /// zero and reconstructs the zero vector. Used when a training set
    /// has no usable rows.
    pub fn zeros(dim: usize, subspaces: usize, codewords: usize) -> Self {
        let bases = subspace_ranges(dim, subspaces)
            .into_iter()
            .map(|r| VqCodebook::from_centers(r.len(), vec![0.0; r.len() * codewords]))
            .collect();
        PqCodebook { dim, bases }
    }
}

fn slice_dataset(data: &Dataset, range: &Range<usize>) -> Dataset {
    let mut flat = Vec::with_capacity(data.len() * range.len());
    for row in data.rows() {
        flat.extend_from_slice(&row[range.clone()]);
    }
    Dataset::from_flat(range.len(), flat).expect("non-empty slice of a valid dataset")
}

pub fn train_pq(
    data: &Dataset,
    subspaces: usize,
    codewords: usize,
    max_iters: usize,
    seed: u64,
) -> Result<PqCodebook, QuantError> {
    if subspaces == 0 || subspaces > data.dim() {
        return Err(QuantError::TooManySubspaces {
            subspaces,
            dim: data.dim(),
        });
    }
    if codewords > data.len() {
        return Err(QuantError::TooManyCenters {
            m: codewords,
            n: data.len(),
        });
    }
    let bases = subspace_ranges(data.dim(), subspaces)
        .iter()
        .map(|r| train_vq(&slice_dataset(data, r), codewords, max_iters, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PqCodebook {
        dim: data.dim(),
        bases,
    })
}

/// More Lloyd iterations on every subspace codebook without re-seeding.
pub(crate) fn refine_pq(cb: &PqCodebook, data: &Dataset, iters: usize) -> PqCodebook {
    let bases = subspace_ranges(data.dim(), cb.subspaces())
        .iter()
        .zip(cb.bases.iter())
        .map(|(r, base)| refine_vq(base, &slice_dataset(data, r), iters))
        .collect();
    PqCodebook {
        dim: data.dim(),
        bases,
    }
}

/// Per-subspace nearest codeword, ties to the smaller code.
pub fn encode_pq(cb: &PqCodebook, x: &[f32]) -> Result<Vec<u16>, QuantError> {
    if x.len() != cb.dim() {
        return Err(QuantError::BadDim {
            expected: cb.dim(),
            actual: x.len(),
        });
    }
    let mut codes = vec![0u16; cb.subspaces()];
    encode_pq_into(cb, x, &mut codes);
    Ok(codes)
}

#[inline]
pub(crate) fn encode_pq_into(cb: &PqCodebook, x: &[f32], out: &mut [u16]) {
    for (b, base) in cb.bases.iter().enumerate() {
        let r = cb.subspace_range(b);
        out[b] = nearest_f32(base, &x[r]) as u16;
    }
}

/// Concatenation of the indexed codewords.
pub fn reconstruct_pq(cb: &PqCodebook, codes: &[u16]) -> Vec<f32> {
    assert_eq!(codes.len(), cb.subspaces());
    let mut out = Vec::with_capacity(cb.dim());
    for (b, &c) in codes.iter().enumerate() {
        out.extend_from_slice(cb.codeword(b, c as usize));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist_sq;
    use rand::{Rng, SeedableRng};

    fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        Dataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn ranges_cover_dim_with_remainder_in_last() {
        assert_eq!(subspace_ranges(4, 2), vec![0..2, 2..4]);
        assert_eq!(subspace_ranges(7, 3), vec![0..2, 2..4, 4..7]);
        assert_eq!(subspace_ranges(200, 24).last().unwrap().len(), 16);
    }

    #[test]
    fn two_independent_2d_codebooks() {
        let data = random_data(40, 4, 1);
        let pq = train_pq(&data, 2, 4, 20, 9).unwrap();
        assert_eq!(pq.subspaces(), 2);
        assert_eq!(pq.base(0).dim(), 2);
        assert_eq!(pq.base(1).dim(), 2);
    }

    #[test]
    fn single_subspace_equals_train_vq() {
        let data = random_data(60, 4, 2);
        let pq = train_pq(&data, 1, 4, 20, 5).unwrap();
        let vq = train_vq(&data, 4, 20, 5).unwrap();
        assert_eq!(pq.base(0), &vq);
    }

    #[test]
    fn per_subspace_training_matches_standalone_vq() {
        let data = random_data(200, 4, 3);
        let pq = train_pq(&data, 2, 4, 20, 13).unwrap();
        for (b, r) in subspace_ranges(4, 2).iter().enumerate() {
            let slice = slice_dataset(&data, r);
            let standalone = train_vq(&slice, 4, 20, 13).unwrap();
            assert_eq!(pq.base(b), &standalone);
        }
    }

    #[test]
    fn rejects_more_subspaces_than_dims() {
        let data = random_data(10, 4, 4);
        assert!(matches!(
            train_pq(&data, 5, 2, 5, 0),
            Err(QuantError::TooManySubspaces { .. })
        ));
    }

    #[test]
    fn encode_simple_and_tie() {
        // Two 1-d subspaces with codewords {0, 1} each.
        let bases = vec![
            VqCodebook::from_centers(1, vec![0.0, 1.0]),
            VqCodebook::from_centers(1, vec![0.0, 1.0]),
        ];
        let cb = PqCodebook { dim: 2, bases };
        assert_eq!(encode_pq(&cb, &[0.9, 0.1]).unwrap(), vec![1, 0]);
        // Midpoint ties take the smaller code.
        assert_eq!(encode_pq(&cb, &[0.5, 0.5]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn codeword_exact_input_roundtrips() {
        let data = random_data(50, 6, 5);
        let pq = train_pq(&data, 3, 4, 20, 21).unwrap();
        let x = reconstruct_pq(&pq, &[2, 3, 1]);
        assert_eq!(encode_pq(&pq, &x).unwrap(), vec![2, 3, 1]);
        assert_eq!(reconstruct_pq(&pq, &[2, 3, 1]), x);
    }

    #[test]
    fn encode_matches_per_subspace_scan() {
        let data = random_data(120, 6, 6);
        let pq = train_pq(&data, 3, 4, 20, 22).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
        for _ in 0..50 {
            let x: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let codes = encode_pq(&pq, &x).unwrap();
            for (b, r) in subspace_ranges(6, 3).iter().enumerate() {
                let sub = &x[r.clone()];
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for j in 0..pq.codewords() {
                    let d = dist_sq(sub, pq.codeword(b, j));
                    if d < best_d {
                        best_d = d;
                        best = j;
                    }
                }
                assert_eq!(codes[b] as usize, best);
            }
        }
    }

    #[test]
    fn encoding_minimizes_over_all_code_tuples() {
        let data = random_data(80, 4, 7);
        let pq = train_pq(&data, 2, 4, 20, 23).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
        for _ in 0..20 {
            let x: Vec<f32> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let chosen = encode_pq(&pq, &x).unwrap();
            let chosen_err = dist_sq(&x, &reconstruct_pq(&pq, &chosen));
            for a in 0..4u16 {
                for b in 0..4u16 {
                    let err = dist_sq(&x, &reconstruct_pq(&pq, &[a, b]));
                    assert!(chosen_err <= err + 1e-12);
                }
            }
        }
    }

    #[test]
    fn zeros_codebook_reconstructs_zero() {
        let cb = PqCodebook::zeros(6, 3, 4);
        assert_eq!(reconstruct_pq(&cb, &[0, 0, 0]), vec![0.0; 6]);
        assert_eq!(encode_pq(&cb, &[1.0; 6]).unwrap(), vec![0, 0, 0]);
    }
}

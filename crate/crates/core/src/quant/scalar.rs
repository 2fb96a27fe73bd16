//! Scalar quantizers.
//!
//! `UqParams` is a uniform grid described by just a step and an offset;
//! its code range is the signed `bits`-bit interval. `SqCodebook` is a
//! non-uniform 1-d codebook trained with Lloyd's algorithm.

use super::QuantError;

/// Uniform quantizer: decode(c) = step·c + offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UqParams {
    pub step: f32,
    pub offset: f32,
    pub bits: u8,
}

/// Inclusive signed code range for a bit width.
pub fn uq_code_range(bits: u8) -> (i32, i32) {
    assert!(bits >= 1 && bits <= 24);
    (-(1i32 << (bits - 1)), (1i32 << (bits - 1)) - 1)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Fit the grid to the value range, optionally clipped to quantiles
/// ((0.0, 1.0) disables clipping). A constant input degenerates to a
/// single-point grid at that value.
pub fn train_uq(
    values: &[f64],
    bits: u8,
    clip_quantiles: (f64, f64),
) -> Result<UqParams, QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    if bits < 1 || bits > 24 {
        return Err(QuantError::BadBits { bits });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let z_min = quantile(&sorted, clip_quantiles.0);
    let z_max = quantile(&sorted, clip_quantiles.1);
    if z_max == z_min {
        return Ok(UqParams {
            step: 1.0,
            offset: z_min as f32,
            bits,
        });
    }
    let step = (z_max - z_min) / ((1u64 << bits) - 1) as f64;
    let offset = (z_max + z_min + step) / 2.0;
    Ok(UqParams {
        step: step as f32,
        offset: offset as f32,
        bits,
    })
}

/// Round half away from zero, clipped into the signed code range.
pub fn encode_uq(p: &UqParams, z: f64) -> i32 {
    debug_assert!(z.is_finite());
    let (lo, hi) = uq_code_range(p.bits);
    let raw = (z - p.offset as f64) / p.step as f64;
    let rounded = raw.round(); // f64::round is half away from zero
    if rounded <= lo as f64 {
        lo
    } else if rounded >= hi as f64 {
        hi
    } else {
        rounded as i32
    }
}

pub fn decode_uq(p: &UqParams, code: i32) -> f64 {
    p.step as f64 * code as f64 + p.offset as f64
}

/// Non-uniform scalar codebook; levels are strictly ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SqCodebook {
    levels: Vec<f32>,
}

impl SqCodebook {
    pub fn from_levels(levels: Vec<f32>) -> Self {
        assert!(!levels.is_empty());
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
        SqCodebook { levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn level(&self, code: usize) -> f64 {
        self.levels[code] as f64
    }

    pub fn levels(&self) -> &[f32] {
        &self.levels
    }
}

/// Lloyd iterations on sorted values; returns the surviving levels and
/// the final distortion.
fn lloyd_1d(sorted: &[f64], mut levels: Vec<f64>) -> (Vec<f64>, f64) {
    levels.dedup();
    let mut assignment = vec![0usize; sorted.len()];
    let mut distortion = 0.0f64;
    for _ in 0..100 {
        let mut changed = false;
        distortion = 0.0;
        // Values are sorted, so assignment boundaries move monotonically.
        let mut level = 0usize;
        for (i, v) in sorted.iter().enumerate() {
            while level + 1 < levels.len() {
                // Tie at the midpoint keeps the smaller code.
                if (v - levels[level]).abs() <= (v - levels[level + 1]).abs() {
                    break;
                }
                level += 1;
            }
            if assignment[i] != level {
                assignment[i] = level;
                changed = true;
            }
            let e = v - levels[level];
            distortion += e * e;
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0f64; levels.len()];
        let mut counts = vec![0usize; levels.len()];
        for (v, a) in sorted.iter().zip(assignment.iter()) {
            sums[*a] += v;
            counts[*a] += 1;
        }
        let mut next: Vec<f64> = Vec::with_capacity(levels.len());
        for (s, c) in sums.iter().zip(counts.iter()) {
            if *c > 0 {
                next.push(s / *c as f64);
            }
        }
        next.dedup();
        if next.len() != levels.len() {
            assignment.iter_mut().for_each(|a| *a = 0);
        }
        levels = next;
    }
    (levels, distortion)
}

/// 1-d Lloyd with 2^bits levels. Runs from an evenly-spaced-quantile
/// seed and from a uniform grid over the value range, keeping whichever
/// converges lower, so the result never loses to a plain uniform grid.
/// Fewer distinct inputs than levels collapse to a shorter codebook.
pub fn train_sq(values: &[f64], bits: u8) -> Result<SqCodebook, QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    if bits < 1 || bits > 16 {
        return Err(QuantError::BadBits { bits });
    }
    let target = 1usize << bits;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= target {
        return Ok(SqCodebook {
            levels: distinct.iter().map(|v| *v as f32).collect(),
        });
    }

    let quantile_seed: Vec<f64> = (0..target)
        .map(|j| quantile(&sorted, (j as f64 + 0.5) / target as f64))
        .collect();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let grid_seed: Vec<f64> = (0..target)
        .map(|j| lo + (hi - lo) * j as f64 / (target - 1) as f64)
        .collect();

    let (from_quantiles, d_q) = lloyd_1d(&sorted, quantile_seed);
    let (from_grid, d_g) = lloyd_1d(&sorted, grid_seed);
    let levels = if d_q <= d_g { from_quantiles } else { from_grid };

    let mut out: Vec<f32> = levels.iter().map(|v| *v as f32).collect();
    out.dedup();
    Ok(SqCodebook { levels: out })
}

/// Nearest level, ties to the smaller code. Returns (code, level).
pub fn quantize_sq(cb: &SqCodebook, z: f64) -> (usize, f64) {
    let levels = &cb.levels;
    let mut idx = levels.partition_point(|l| (*l as f64) < z);
    if idx == levels.len() {
        idx = levels.len() - 1;
    } else if idx > 0 {
        let left = (z - levels[idx - 1] as f64).abs();
        let right = (levels[idx] as f64 - z).abs();
        if left <= right {
            idx -= 1;
        }
    }
    (idx, levels[idx] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uq_span_minus_one_to_one() {
        let values: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
        let p = train_uq(&values, 8, (0.0, 1.0)).unwrap();
        assert!((p.step as f64 - 2.0 / 255.0).abs() < 1e-9);
        assert!((p.offset as f64 - p.step as f64 / 2.0).abs() < 1e-9);
        assert_eq!(encode_uq(&p, -1.0), -128);
        assert_eq!(encode_uq(&p, 1.0), 127);
    }

    #[test]
    fn uq_constant_input_degenerates() {
        let p = train_uq(&[5.0; 10], 8, (0.0, 1.0)).unwrap();
        assert_eq!(encode_uq(&p, 5.0), 0);
        assert_eq!(decode_uq(&p, 0), 5.0);
        assert_eq!(encode_uq(&p, 123.0), 118); // clipping still sane
    }

    #[test]
    fn uq_clips_outliers() {
        let values: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let p = train_uq(&values, 4, (0.0, 1.0)).unwrap();
        let (lo, hi) = uq_code_range(4);
        assert_eq!(encode_uq(&p, 1e9), hi);
        assert_eq!(encode_uq(&p, -1e9), lo);
    }

    #[test]
    fn uq_roundtrip_error_bounded_by_half_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p = train_uq(&values, 4, (0.0, 1.0)).unwrap();
        let half = p.step as f64 / 2.0 + 1e-9;
        let mut total = 0.0;
        for v in &values {
            let err = (v - decode_uq(&p, encode_uq(&p, *v))).abs();
            assert!(err <= half, "err {err} for {v}");
            total += err;
        }
        assert!(total / values.len() as f64 <= half);
    }

    #[test]
    fn uq_decode_is_arithmetic_progression() {
        let values = [-3.0, 0.5, 2.0, 7.0];
        let p = train_uq(&values, 6, (0.0, 1.0)).unwrap();
        assert_eq!(decode_uq(&p, 0), p.offset as f64);
        let d1 = decode_uq(&p, 1) - decode_uq(&p, 0);
        assert!((d1 - p.step as f64).abs() < 1e-12);
        for c in -5..5 {
            let z = decode_uq(&p, c);
            assert_eq!(encode_uq(&p, z), c);
        }
    }

    #[test]
    fn uq_quantile_clipping_tightens_range() {
        let mut values: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        values.push(1e6); // outlier
        let clipped = train_uq(&values, 8, (0.01, 0.99)).unwrap();
        let unclipped = train_uq(&values, 8, (0.0, 1.0)).unwrap();
        assert!(clipped.step < unclipped.step);
    }

    #[test]
    fn uq_rejects_bad_input() {
        assert!(matches!(
            train_uq(&[], 8, (0.0, 1.0)),
            Err(QuantError::EmptyInput)
        ));
        assert!(matches!(
            train_uq(&[f64::NAN], 8, (0.0, 1.0)),
            Err(QuantError::NonFinite)
        ));
        assert!(matches!(
            train_uq(&[1.0], 0, (0.0, 1.0)),
            Err(QuantError::BadBits { bits: 0 })
        ));
    }

    #[test]
    fn sq_two_point_masses() {
        let values = [1.0, 1.0, 1.0, 9.0, 9.0, 9.0];
        let cb = train_sq(&values, 1).unwrap();
        assert_eq!(cb.levels(), &[1.0, 9.0]);
    }

    #[test]
    fn sq_single_distinct_value() {
        let cb = train_sq(&[4.0; 7], 4).unwrap();
        assert_eq!(cb.levels(), &[4.0]);
    }

    #[test]
    fn sq_beats_uniform_grid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // Skewed data: uniform grids waste levels in the sparse tail.
        let values: Vec<f64> = (0..1000)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0f64..1.0);
                u * u * u * 10.0
            })
            .collect();
        let cb = train_sq(&values, 4).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let grid: Vec<f32> = (0..16)
            .map(|j| (lo + (hi - lo) * j as f64 / 15.0) as f32)
            .collect();
        let uniform = SqCodebook::from_levels(grid);
        let err = |cb: &SqCodebook| -> f64 {
            values
                .iter()
                .map(|v| {
                    let (_, l) = quantize_sq(cb, *v);
                    (v - l) * (v - l)
                })
                .sum()
        };
        assert!(err(&cb) <= err(&uniform));
    }

    #[test]
    fn sq_nearest_and_tie_rule() {
        let cb = SqCodebook::from_levels(vec![1.0, 9.0]);
        assert_eq!(quantize_sq(&cb, 2.0), (0, 1.0));
        assert_eq!(quantize_sq(&cb, 5.0), (0, 1.0)); // midpoint
        assert_eq!(quantize_sq(&cb, 8.0), (1, 9.0));
        assert_eq!(quantize_sq(&cb, -50.0), (0, 1.0));
        assert_eq!(quantize_sq(&cb, 50.0), (1, 9.0));
    }

    #[test]
    fn sq_matches_exhaustive_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let cb = train_sq(&values, 3).unwrap();
        for _ in 0..200 {
            let z: f64 = rng.gen_range(-6.0..6.0);
            let (code, level) = quantize_sq(&cb, z);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, l) in cb.levels().iter().enumerate() {
                let d = (z - *l as f64).abs();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assert_eq!(code, best);
            assert_eq!(level, cb.level(best));
        }
    }

    #[test]
    fn sq_levels_ascending_on_random_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for bits in [1u8, 2, 4] {
            let values: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cb = train_sq(&values, bits).unwrap();
            assert!(cb.levels().windows(2).all(|w| w[0] < w[1]));
            assert!(cb.len() <= 1 << bits);
        }
    }
}

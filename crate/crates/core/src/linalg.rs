//! Small dense linear algebra helpers shared by the quantizers.
//!
//! Everything accumulates in f64 regardless of the storage type so that
//! results do not depend on how the work is split across threads.

/// Inner product of two f32 slices, accumulated left to right in f64.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

/// Inner product of two f64 slices, accumulated left to right.
#[inline]
pub fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Squared Euclidean distance in f64.
#[inline]
pub fn dist_sq(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    acc
}

#[inline]
pub fn norm_sq(a: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for x in a {
        acc += *x as f64 * *x as f64;
    }
    acc
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn norm_f64(a: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for x in a {
        acc += x * x;
    }
    acc.sqrt()
}

/// y = M x for a row-major d×d matrix.
pub fn mat_vec(mat: &[f32], d: usize, x: &[f32]) -> Vec<f64> {
    debug_assert_eq!(mat.len(), d * d);
    debug_assert_eq!(x.len(), d);
    (0..d).map(|i| dot(&mat[i * d..(i + 1) * d], x)).collect()
}

/// y = Mᵀ x for a row-major d×d matrix.
pub fn mat_t_vec(mat: &[f32], d: usize, x: &[f32]) -> Vec<f64> {
    debug_assert_eq!(mat.len(), d * d);
    debug_assert_eq!(x.len(), d);
    let mut y = vec![0.0f64; d];
    for i in 0..d {
        let xi = x[i] as f64;
        let row = &mat[i * d..(i + 1) * d];
        for j in 0..d {
            y[j] += row[j] as f64 * xi;
        }
    }
    y
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|x| *x as f32).collect()
}

/// Largest entry of |MᵀM − I| for a row-major d×d matrix.
pub fn orthonormality_error(mat: &[f32], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0f64;
            for k in 0..d {
                acc += mat[k * d + i] as f64 * mat[k * d + j] as f64;
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).abs());
        }
    }
    worst
}

#[derive(Debug)]
pub enum LinalgError {
    NonFinite,
    NoConvergence,
    Degenerate,
}

impl std::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinalgError::NonFinite => write!(f, "matrix contains non-finite values"),
            LinalgError::NoConvergence => write!(f, "iteration did not converge"),
            LinalgError::Degenerate => write!(f, "degenerate input"),
        }
    }
}

impl std::error::Error for LinalgError {}

/// Result of a singular value decomposition A = U diag(s) Vᵀ.
pub struct Svd {
    pub d: usize,
    /// Row-major d×d with left singular vectors as columns.
    pub u: Vec<f64>,
    /// Singular values, descending.
    pub s: Vec<f64>,
    /// Row-major d×d, rows are right singular vectors.
    pub vt: Vec<f64>,
}

/// One-sided Jacobi SVD of a square row-major matrix.
///
/// Rank-deficient inputs are handled by completing the left basis with
/// Gram-Schmidt, so the returned factors are always orthonormal.
pub fn svd_square(a: &[f64], d: usize) -> Result<Svd, LinalgError> {
    assert_eq!(a.len(), d * d);
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    // Column-major working copies: w[j] is the j-th column of A·V.
    let mut w: Vec<Vec<f64>> = (0..d).map(|j| (0..d).map(|i| a[i * d + j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = 1e-14;
    let max_sweeps = 64;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..d {
                    alpha += w[p][i] * w[p][i];
                    beta += w[q][i] * w[q][i];
                    gamma += w[p][i] * w[q][i];
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..d {
                    let wp = w[p][i];
                    let wq = w[q][i];
                    w[p][i] = c * wp - s * wq;
                    w[q][i] = s * wp + c * wq;
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence);
    }

    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = w.iter().map(|col| norm_f64(col)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let smax = norms[order[0]];
    let tol = smax.max(1.0) * 1e-13;
    let mut s = Vec::with_capacity(d);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut vt = vec![0.0f64; d * d];
    for (rank, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        for i in 0..d {
            vt[rank * d + i] = v[j][i];
        }
        if norms[j] > tol {
            u_cols.push(w[j].iter().map(|x| x / norms[j]).collect());
        } else {
            // Null column: take any unit vector orthogonal to the basis so far.
            let mut filled = false;
            for cand in 0..d {
                let mut col = vec![0.0f64; d];
                col[cand] = 1.0;
                for existing in &u_cols {
                    let proj = dot_f64(&col, existing);
                    for i in 0..d {
                        col[i] -= proj * existing[i];
                    }
                }
                let n = norm_f64(&col);
                if n > 1e-6 {
                    for x in col.iter_mut() {
                        *x /= n;
                    }
                    u_cols.push(col);
                    filled = true;
                    break;
                }
            }
            if !filled {
                return Err(LinalgError::Degenerate);
            }
        }
    }

    let mut u = vec![0.0f64; d * d];
    for (j, col) in u_cols.iter().enumerate() {
        for i in 0..d {
            u[i * d + j] = col[i];
        }
    }
    Ok(Svd { d, u, s, vt })
}

/// R = U·Vᵀ, the orthogonal matrix closest to the decomposed input.
pub fn procrustes_rotation(svd: &Svd) -> Vec<f64> {
    let d = svd.d;
    let mut r = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += svd.u[i * d + k] * svd.vt[k * d + j];
            }
            r[i * d + j] = acc;
        }
    }
    r
}

/// Dominant eigenvector of a symmetric PSD matrix by power iteration,
/// sign-fixed so the first coordinate above noise level is positive.
pub fn dominant_eigenvector(mat: &[f64], d: usize) -> Result<Vec<f64>, LinalgError> {
    assert_eq!(mat.len(), d * d);
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let scale = mat.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(LinalgError::Degenerate);
    }
    // Fixed start with unequal components so we never sit exactly on a
    // non-dominant eigenspace of a structured matrix.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 / (i + 1) as f64).collect();
    let n = norm_f64(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut prev = v.clone();
    for _ in 0..10_000 {
        let mut next = vec![0.0f64; d];
        for i in 0..d {
            next[i] = dot_f64(&mat[i * d..(i + 1) * d], &v);
        }
        let n = norm_f64(&next);
        if n <= scale * 1e-15 {
            return Err(LinalgError::Degenerate);
        }
        next.iter_mut().for_each(|x| *x /= n);
        // Power iteration may alternate sign when the dominant eigenvalue
        // is negative; PSD inputs converge directly.
        let delta = next
            .iter()
            .zip(prev.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prev.copy_from_slice(&next);
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    let thresh = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) * 1e-9;
    for x in v.iter() {
        if x.abs() > thresh {
            if *x < 0.0 {
                v.iter_mut().for_each(|y| *y = -*y);
            }
            break;
        }
    }
    Ok(v)
}

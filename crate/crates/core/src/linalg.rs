//! Dense linear algebra shared by the mode solver and the samplers.

use nalgebra::{DMatrix, DVector};

use crate::error::{CgpError, Result};

/// Relative diagonal inflation applied before every factorization of a
/// coefficient covariance.
pub const DEFAULT_JITTER: f64 = 1e-10;

/// Jitter is multiplied by 10 after each failed Cholesky attempt, at most
/// this many times.
const JITTER_RETRIES: usize = 6;

/// Lower Cholesky factor of `gamma + ε·mean(diag)·I`.
///
/// Returns the factor and the absolute jitter that was actually added.
pub fn jittered_cholesky(gamma: &DMatrix<f64>, rel_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    let m = gamma.nrows();
    if m != gamma.ncols() {
        return Err(CgpError::DimensionMismatch {
            expected: m,
            got: gamma.ncols(),
        });
    }
    if m == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    let mean_diag = gamma.diagonal().mean();
    if !(mean_diag.is_finite() && mean_diag > 0.0) {
        return Err(CgpError::Numerical(
            "covariance has a non-positive mean diagonal".into(),
        ));
    }
    let mut eps = rel_jitter;
    for _ in 0..=JITTER_RETRIES {
        let shift = eps * mean_diag;
        let mut shifted = gamma.clone();
        for i in 0..m {
            shifted[(i, i)] += shift;
        }
        if let Some(chol) = shifted.cholesky() {
            return Ok((chol.unpack(), shift));
        }
        log::debug!("cholesky failed with relative jitter {eps:e}; retrying");
        eps = if eps > 0.0 { eps * 10.0 } else { 1e-12 };
    }
    Err(CgpError::Numerical(
        "covariance is not positive definite even after jitter".into(),
    ))
}

/// Full Householder QR of an `r × c` matrix with `r >= c`.
///
/// Returns `(Q, R)` with `Q` orthogonal `r × r` and `R` upper triangular
/// `c × c` (the top block of the triangular factor).
pub fn full_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    assert!(rows >= cols, "full_qr needs rows >= cols");
    let mut work = a.clone();
    let mut q = DMatrix::<f64>::identity(rows, rows);
    let mut v = vec![0.0; rows];
    for k in 0..cols {
        let norm: f64 = (k..rows).map(|i| work[(i, k)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if work[(k, k)] > 0.0 { -norm } else { norm };
        for i in 0..rows {
            v[i] = if i < k { 0.0 } else { work[(i, k)] };
        }
        v[k] -= alpha;
        let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // work <- (I - 2vv'/v'v) work
        for j in k..cols {
            let dot: f64 = (k..rows).map(|i| v[i] * work[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..rows {
                work[(i, j)] -= f * v[i];
            }
        }
        // q <- q (I - 2vv'/v'v)
        for i in 0..rows {
            let dot: f64 = (k..rows).map(|l| q[(i, l)] * v[l]).sum();
            let f = 2.0 * dot / vnorm2;
            for l in k..rows {
                q[(i, l)] -= f * v[l];
            }
        }
    }
    let mut r = DMatrix::zeros(cols, cols);
    for i in 0..cols {
        for j in i..cols {
            r[(i, j)] = work[(i, j)];
        }
    }
    (q, r)
}

/// Solve `R^T x = b` for upper-triangular `R`.
fn solve_upper_transpose(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = r.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= r[(k, i)] * x[k];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// A Gaussian vector `ξ ~ N(0, Γ)` conditioned on `Aξ = y`, written as
///
/// ```text
/// ξ = mean + directions · z,   z ~ N(0, I_{m−n})
/// ```
///
/// with `directions = L Q₂`, where `Γ = L Lᵀ` (jittered) and `Q₂` spans the
/// null space of `(A L)`. Every `z` gives a point on the affine subspace.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub chol: DMatrix<f64>,
    pub jitter: f64,
    pub mean: DVector<f64>,
    pub directions: DMatrix<f64>,
    /// `Q₂`, an orthonormal basis of the null space of `A L`.
    pub null_whitened: DMatrix<f64>,
    /// `|L⁻¹ mean|²`.
    pub offset_norm2: f64,
}

impl Whitened {
    pub fn reduced_dim(&self) -> usize {
        self.directions.ncols()
    }

    /// `mean + directions · z`.
    pub fn point(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.directions * z
    }

    /// Coordinates `z` of a point `c` on the affine subspace.
    pub fn coordinates(&self, c: &DVector<f64>) -> DVector<f64> {
        let v = self
            .chol
            .solve_lower_triangular(&(c - &self.mean))
            .expect("cholesky factor has a positive diagonal");
        self.null_whitened.tr_mul(&v)
    }
}

pub fn whiten(
    gamma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    rel_jitter: f64,
) -> Result<Whitened> {
    let m = gamma.nrows();
    let n = a.nrows();
    if a.ncols() != m {
        return Err(CgpError::DimensionMismatch {
            expected: m,
            got: a.ncols(),
        });
    }
    if y.len() != n {
        return Err(CgpError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n > m {
        return Err(CgpError::InfeasibleSize {
            coefficients: m,
            observations: n,
        });
    }
    let (chol, jitter) = jittered_cholesky(gamma, rel_jitter)?;
    if n == 0 {
        return Ok(Whitened {
            mean: DVector::zeros(m),
            directions: chol.clone(),
            chol,
            jitter,
            null_whitened: DMatrix::identity(m, m),
            offset_norm2: 0.0,
        });
    }
    let bt = (a * &chol).transpose();
    let (q, r) = full_qr(&bt);
    let max_diag = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = max_diag * (m as f64) * f64::EPSILON * 16.0;
    if max_diag == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= tol) {
        return Err(CgpError::RankDeficient);
    }
    let w = solve_upper_transpose(&r, y);
    let offset_norm2 = w.norm_squared();
    let v0 = q.columns(0, n) * w;
    let mean = &chol * v0;
    let null_whitened = q.columns(n, m - n).into_owned();
    let directions = &chol * &null_whitened;
    Ok(Whitened {
        chol,
        jitter,
        mean,
        directions,
        null_whitened,
        offset_norm2,
    })
}

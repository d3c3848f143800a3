//! Knot grids and piecewise-polynomial basis functions on `[0, 1]`.
//!
//! For the reference hat `h(s) = (1 − |s|)₊` we use its primitives
//!
//! ```text
//! H(s) = ∫_{−∞}^s h,   G(s) = ∫_{−∞}^s H
//! ```
//!
//! which are piecewise polynomials of degree 2 and 3 with breakpoints at
//! `s ∈ {−1, 0, 1}`. With `s = (x − u_j)/Δ`,
//!
//! ```text
//! h_j(x)  = h(s)
//! φ_j(x)  = Δ  (H(s) − H(−j))
//! φ̈_j(x)  = Δ² (G(s) − G(−j)) − Δ H(−j) x
//! ```
//!
//! so that `φ_j(0) = φ̈_j(0) = φ̈_j'(0) = 0`. Only `j = 0` has non-zero
//! offsets `H(0) = 1/2`, `G(0) = 1/6`; they are precomputed per knot.

use crate::error::{CgpError, Result};

/// Slack allowed when checking that inputs lie in `[0, 1]`.
const DOMAIN_SLACK: f64 = 1e-12;

/// Uniform subdivision `u_j = j/N`, `j = 0..=N`, of the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    subdivisions: usize,
    knots: Vec<f64>,
    /// `(H(−j), G(−j))` per knot.
    offsets: Vec<(f64, f64)>,
}

impl KnotGrid {
    pub fn uniform(subdivisions: usize) -> Result<Self> {
        if subdivisions == 0 {
            return Err(CgpError::Config("a knot grid needs N >= 1".into()));
        }
        let knots: Vec<f64> = (0..=subdivisions)
            .map(|j| j as f64 / subdivisions as f64)
            .collect();
        let offsets = (0..=subdivisions)
            .map(|j| {
                let s = -(j as f64);
                (primitive(s), second_primitive(s))
            })
            .collect();
        Ok(KnotGrid {
            subdivisions,
            knots,
            offsets,
        })
    }

    /// Number of subdivisions `N`.
    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// Number of knots, `N + 1`.
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.subdivisions as f64
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot(&self, j: usize) -> f64 {
        self.knots[j]
    }

    fn check(&self, j: usize, x: f64) -> Result<f64> {
        if j > self.subdivisions {
            return Err(CgpError::IndexOutOfRange {
                index: j,
                max: self.subdivisions,
            });
        }
        check_unit(x)
    }

    fn scaled(&self, j: usize, x: f64) -> f64 {
        (x - self.knots[j]) * self.subdivisions as f64
    }

    /// `h_j(x)`.
    pub fn hat_eval(&self, j: usize, x: f64) -> Result<f64> {
        let x = self.check(j, x)?;
        Ok(self.hat_unchecked(j, x))
    }

    /// `φ_j(x) = ∫_0^x h_j`.
    pub fn int_hat_eval(&self, j: usize, x: f64) -> Result<f64> {
        let x = self.check(j, x)?;
        Ok(self.int_hat_unchecked(j, x))
    }

    /// `φ_j'(x) = h_j(x)`.
    pub fn int_hat_deriv(&self, j: usize, x: f64) -> Result<f64> {
        self.hat_eval(j, x)
    }

    /// `φ̈_j(x) = ∫_0^x φ_j`.
    pub fn int2_hat_eval(&self, j: usize, x: f64) -> Result<f64> {
        let x = self.check(j, x)?;
        Ok(self.int2_hat_unchecked(j, x))
    }

    /// `φ̈_j'(x) = φ_j(x)`.
    pub fn int2_hat_deriv(&self, j: usize, x: f64) -> Result<f64> {
        self.int_hat_eval(j, x)
    }

    /// `φ̈_j''(x) = h_j(x)`.
    pub fn int2_hat_deriv2(&self, j: usize, x: f64) -> Result<f64> {
        self.hat_eval(j, x)
    }

    pub(crate) fn hat_unchecked(&self, j: usize, x: f64) -> f64 {
        let s = self.scaled(j, x);
        (1.0 - s.abs()).max(0.0)
    }

    pub(crate) fn int_hat_unchecked(&self, j: usize, x: f64) -> f64 {
        let s = self.scaled(j, x);
        self.spacing() * (primitive(s) - self.offsets[j].0)
    }

    pub(crate) fn int2_hat_unchecked(&self, j: usize, x: f64) -> f64 {
        let s = self.scaled(j, x);
        let delta = self.spacing();
        let (h0, g0) = self.offsets[j];
        delta * delta * (second_primitive(s) - g0) - delta * h0 * x
    }

    /// The interval `[u_k, u_{k+1}]` containing `x` and the local coordinate
    /// in it; the only non-zero hats at `x` are `h_k` and `h_{k+1}`.
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.subdivisions;
        let scaled = x * n as f64;
        let k = (scaled.floor().max(0.0) as usize).min(n - 1);
        (k, scaled - k as f64)
    }
}

/// `H(s) = ∫_{−∞}^s (1 − |t|)₊ dt`.
fn primitive(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s <= 0.0 {
        0.5 * (1.0 + s) * (1.0 + s)
    } else if s <= 1.0 {
        1.0 - 0.5 * (1.0 - s) * (1.0 - s)
    } else {
        1.0
    }
}

/// `G(s) = ∫_{−∞}^s H(t) dt`.
fn second_primitive(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s <= 0.0 {
        (1.0 + s).powi(3) / 6.0
    } else if s <= 1.0 {
        s + (1.0 - s).powi(3) / 6.0
    } else {
        s
    }
}

pub(crate) fn check_unit(x: f64) -> Result<f64> {
    if !x.is_finite() || !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&x) {
        return Err(CgpError::OutOfDomain { value: x });
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Tensor-product hat basis on `[0, 1]^d`.
///
/// Coefficients are laid out in row-major order: the last coordinate's index
/// varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    grids: Vec<KnotGrid>,
    strides: Vec<usize>,
    size: usize,
}

impl TensorGrid {
    pub fn new(grids: Vec<KnotGrid>) -> Result<Self> {
        if grids.is_empty() {
            return Err(CgpError::Config("tensor grid needs at least one dimension".into()));
        }
        let mut strides = vec![1; grids.len()];
        for k in (0..grids.len() - 1).rev() {
            strides[k] = strides[k + 1] * grids[k + 1].len();
        }
        let size = strides[0] * grids[0].len();
        Ok(TensorGrid {
            grids,
            strides,
            size,
        })
    }

    pub fn dim(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[KnotGrid] {
        &self.grids
    }

    /// Total number of tensor basis functions, `∏ (N_k + 1)`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.dim() {
            return Err(CgpError::DimensionMismatch {
                expected: self.dim(),
                got: multi.len(),
            });
        }
        let mut flat = 0;
        for ((&i, g), &stride) in multi.iter().zip(&self.grids).zip(&self.strides) {
            if i >= g.len() {
                return Err(CgpError::IndexOutOfRange {
                    index: i,
                    max: g.subdivisions(),
                });
            }
            flat += i * stride;
        }
        Ok(flat)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    /// Knot coordinates of the basis function with flat index `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.grids)
            .map(|(&i, g)| g.knot(i))
            .collect()
    }

    /// `Φ_{i_1..i_d}(x) = ∏_k h_{i_k}(x_k)`.
    pub fn tensor_eval(&self, multi: &[usize], x: &[f64]) -> Result<f64> {
        self.flat_index(multi)?;
        if x.len() != self.dim() {
            return Err(CgpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut value = 1.0;
        for ((&i, g), &xk) in multi.iter().zip(&self.grids).zip(x) {
            value *= g.hat_eval(i, xk)?;
        }
        Ok(value)
    }

    /// Non-zero basis values at `x` as `(flat index, value)` pairs
    /// (at most `2^d` of them).
    pub(crate) fn support(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut entries = vec![(0usize, 1.0f64)];
        for ((g, &xk), &stride) in self.grids.iter().zip(x).zip(&self.strides) {
            let (k, frac) = g.locate(xk);
            let mut next = Vec::with_capacity(entries.len() * 2);
            for &(idx, w) in &entries {
                next.push((idx + k * stride, w * (1.0 - frac)));
                next.push((idx + (k + 1) * stride, w * frac));
            }
            entries = next;
        }
        entries
    }
}

/// The basis used by a finite-dimensional model.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// Hat functions `h_j`.
    Hat(KnotGrid),
    /// Once-integrated hats `φ_j`.
    IntHat(KnotGrid),
    /// Twice-integrated hats `φ̈_j`.
    Int2Hat(KnotGrid),
    /// Tensor products of hats in `d >= 2` dimensions.
    Tensor(TensorGrid),
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::Tensor(t) => t.dim(),
            _ => 1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Hat(g) | Basis::IntHat(g) | Basis::Int2Hat(g) => g.len(),
            Basis::Tensor(t) => t.size(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Basis::Hat(_) => "hat",
            Basis::IntHat(_) => "int_hat",
            Basis::Int2Hat(_) => "int2_hat",
            Basis::Tensor(_) => "tensor",
        }
    }

    /// All basis values at `x` written into `out` (length `self.len()`).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(CgpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        debug_assert_eq!(out.len(), self.len());
        match self {
            Basis::Hat(g) => {
                let x = check_unit(x[0])?;
                out.fill(0.0);
                let (k, frac) = g.locate(x);
                out[k] = 1.0 - frac;
                out[k + 1] = frac;
            }
            Basis::IntHat(g) => {
                let x = check_unit(x[0])?;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = g.int_hat_unchecked(j, x);
                }
            }
            Basis::Int2Hat(g) => {
                let x = check_unit(x[0])?;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = g.int2_hat_unchecked(j, x);
                }
            }
            Basis::Tensor(t) => {
                let clamped = x.iter().map(|&v| check_unit(v)).collect::<Result<Vec<_>>>()?;
                out.fill(0.0);
                for (idx, w) in t.support(&clamped) {
                    out[idx] += w;
                }
            }
        }
        Ok(())
    }
}

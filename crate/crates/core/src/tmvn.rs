//! Sampling `ξ ~ N(0, Γ)` conditioned on `Aξ = y` and restricted to the
//! polyhedron `Gξ ≥ h`.
//!
//! All draws are generated in whitened null-space coordinates `z`, with
//! `ξ = ξ_I + W z` and `z ~ N(0, I)` before truncation, so the equalities
//! hold by construction.
//!
//! # Random numbers
//!
//! Streams are `ChaCha20Rng::seed_from_u64(seed)` with `set_stream(s)`.
//! Uniforms are `(next_u64 >> 11) · 2⁻⁵³`; normals use the cosine branch of
//! Box–Muller with `u₁ ← 1 − uniform`. Stream 0 drives the Gibbs chain,
//! stream `1 + c` drives rejection chunk `c` and stream `u64::MAX` the
//! acceptance probe.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::linalg::{full_qr, whiten, Whitened};
use crate::model::InequalitySystem;

/// Draws per independent rejection stream.
pub const REJECTION_CHUNK: usize = 64;

/// The RNG algorithm identity written to run metadata.
pub const RNG_NAME: &str = "chacha20 (rand_chacha 0.3), 53-bit uniforms, cosine Box-Muller normals";

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Exact draw from `N(mean, sd²)` truncated to `[lo, hi]`.
pub fn truncnorm_1d(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut impl RngCore) -> Result<f64> {
    if !(sd > 0.0 && sd.is_finite()) || !mean.is_finite() {
        return Err(CgpError::Config(format!("truncated normal needs finite mean and sd > 0, got ({mean}, {sd})")));
    }
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(CgpError::Config(format!("empty truncation interval [{lo}, {hi}]")));
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    Ok(mean + sd * std_truncnorm(a, b, rng))
}

fn std_truncnorm(a: f64, b: f64, rng: &mut impl RngCore) -> f64 {
    if a >= 0.0 {
        upper_tail(a, b, rng)
    } else if b <= 0.0 {
        -upper_tail(-b, -a, rng)
    } else if b - a < 1.0 {
        loop {
            let z = a + (b - a) * uniform(rng);
            if uniform(rng) <= (-0.5 * z * z).exp() {
                return z;
            }
        }
    } else {
        loop {
            let z = standard_normal(rng);
            if z >= a && z <= b {
                return z;
            }
        }
    }
}

/// `0 ≤ a < b ≤ ∞`.
fn upper_tail(a: f64, b: f64, rng: &mut impl RngCore) -> f64 {
    if b.is_finite() && (b - a) * (b + a) <= 2.0 {
        loop {
            let z = a + (b - a) * uniform(rng);
            if uniform(rng) <= (-0.5 * (z - a) * (z + a)).exp() {
                return z;
            }
        }
    } else if a < 0.5 {
        loop {
            let z = standard_normal(rng).abs();
            if z >= a && z <= b {
                return z;
            }
        }
    } else {
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let z = a - (1.0 - uniform(rng)).ln() / alpha;
            if z <= b && uniform(rng) <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
                return z;
            }
        }
    }
}

/// `N(0, Γ)` conditioned on `Aξ = y`.
#[derive(Debug, Clone)]
pub struct ConditionedGaussian {
    whitened: Whitened,
    null_basis: DMatrix<f64>,
    reduced_cov: DMatrix<f64>,
}

pub fn condition_on_equalities(
    gamma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    rel_jitter: f64,
) -> Result<ConditionedGaussian> {
    let whitened = whiten(gamma, a, y, rel_jitter)?;
    Ok(ConditionedGaussian::from_whitened(whitened, a))
}

impl ConditionedGaussian {
    pub fn from_whitened(whitened: Whitened, a: &DMatrix<f64>) -> Self {
        let m = whitened.mean.len();
        let n = a.nrows();
        let null_basis = if n == 0 {
            DMatrix::identity(m, m)
        } else {
            let (q, _) = full_qr(&a.transpose());
            q.columns(n, m - n).into_owned()
        };
        let c = null_basis.tr_mul(&whitened.directions);
        let reduced_cov = &c * c.transpose();
        ConditionedGaussian {
            whitened,
            null_basis,
            reduced_cov,
        }
    }

    /// `ξ_I`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.whitened.mean
    }

    /// `W` with `Σ_c = W Wᵀ`.
    pub fn directions(&self) -> &DMatrix<f64> {
        &self.whitened.directions
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let w = &self.whitened.directions;
        w * w.transpose()
    }

    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    pub fn reduced_cov(&self) -> &DMatrix<f64> {
        &self.reduced_cov
    }

    pub fn whitened(&self) -> &Whitened {
        &self.whitened
    }

    pub fn dim(&self) -> usize {
        self.whitened.mean.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.whitened.reduced_dim()
    }

    pub fn point(&self, z: &DVector<f64>) -> DVector<f64> {
        self.whitened.point(z)
    }

    /// One unconstrained conditional draw.
    pub fn draw(&self, rng: &mut impl RngCore) -> DVector<f64> {
        let z = DVector::from_fn(self.reduced_dim(), |_, _| standard_normal(rng));
        self.point(&z)
    }
}

/// `G c ≥ h` in dense form.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl Polyhedron {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(CgpError::DimensionMismatch {
                expected: matrix.nrows(),
                got: rhs.len(),
            });
        }
        Ok(Polyhedron { matrix, rhs })
    }

    pub fn from_system(system: &InequalitySystem) -> Self {
        let (matrix, rhs) = system.dense();
        Polyhedron { matrix, rhs }
    }

    pub fn unconstrained(dim: usize) -> Self {
        Polyhedron {
            matrix: DMatrix::zeros(0, dim),
            rhs: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn min_margin(&self, c: &DVector<f64>) -> f64 {
        (&self.matrix * c - &self.rhs).iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    /// `(M, b)` with `M z ≥ b` iff `ξ_I + W z` lies in the polyhedron.
    fn reduce(&self, cond: &ConditionedGaussian) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if self.matrix.ncols() != cond.dim() {
            return Err(CgpError::DimensionMismatch {
                expected: cond.dim(),
                got: self.matrix.ncols(),
            });
        }
        Ok((
            &self.matrix * cond.directions(),
            &self.rhs - &self.matrix * cond.mean(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    RejectionFromMode,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    pub seed: u64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub max_rejection_tries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: SamplerMethod::RejectionFromMode,
            seed: 0,
            n_samples: 100,
            burn_in: 1000,
            thinning: 10,
            max_rejection_tries: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub draws: Vec<DVector<f64>>,
    pub method: SamplerMethod,
    /// Accepted / proposed (rejection only).
    pub acceptance_rate: Option<f64>,
    pub proposals: usize,
    /// Per-coefficient effective sample size (Gibbs only).
    pub effective_sample_size: Option<Vec<f64>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Coefficient-wise average (the Monte Carlo estimate of `ξ_C`).
    pub fn mean(&self) -> Option<DVector<f64>> {
        let first = self.draws.first()?;
        let mut acc = DVector::zeros(first.len());
        for d in &self.draws {
            acc += d;
        }
        Some(acc / self.draws.len() as f64)
    }
}

/// Exact rejection sampling with proposals `N(t*, I)` in reduced coordinates,
/// where `t*` are the coordinates of the mode `μ`.
///
/// Since `t*` is the point of the polyhedron closest to the origin,
/// `z·t* ≥ |t*|²` on the polyhedron and `exp(|t*|² − z·t*)` is a valid
/// acceptance probability.
pub fn sample_rejection_from_mode(
    cond: &ConditionedGaussian,
    mode: &DVector<f64>,
    constraints: &Polyhedron,
    config: &SamplerConfig,
) -> Result<SampleBatch> {
    let (m_mat, b) = constraints.reduce(cond)?;
    let t_star = cond.whitened().coordinates(mode);
    let n = config.n_samples;
    let tries = config.max_rejection_tries.max(1);
    let chunks: Vec<usize> = (0..n.div_ceil(REJECTION_CHUNK)).collect();
    let results: Vec<Result<(Vec<DVector<f64>>, usize)>> = chunks
        .par_iter()
        .map(|&c| {
            let want = REJECTION_CHUNK.min(n - c * REJECTION_CHUNK);
            let mut rng = stream_rng(config.seed, 1 + c as u64);
            let budget = want.saturating_mul(tries);
            let mut out = Vec::with_capacity(want);
            let mut proposals = 0usize;
            while out.len() < want {
                if proposals >= budget {
                    return Err(CgpError::LowAcceptance {
                        rate: out.len() as f64 / proposals as f64,
                        max_tries: tries,
                    });
                }
                proposals += 1;
                if let Some(z) = propose(&t_star, &m_mat, &b, &mut rng) {
                    out.push(cond.point(&z));
                }
            }
            Ok((out, proposals))
        })
        .collect();
    let mut draws = Vec::with_capacity(n);
    let mut proposals = 0;
    for r in results {
        let (d, p) = r?;
        draws.extend(d);
        proposals += p;
    }
    Ok(SampleBatch {
        draws,
        method: SamplerMethod::RejectionFromMode,
        acceptance_rate: (proposals > 0).then(|| n as f64 / proposals as f64),
        proposals,
        effective_sample_size: None,
    })
}

/// Acceptance rate of the rejection sampler over `n` proposals.
pub fn probe_acceptance(
    cond: &ConditionedGaussian,
    mode: &DVector<f64>,
    constraints: &Polyhedron,
    seed: u64,
    n: usize,
) -> Result<f64> {
    let (m_mat, b) = constraints.reduce(cond)?;
    let t_star = cond.whitened().coordinates(mode);
    let mut rng = stream_rng(seed, u64::MAX);
    let accepted = (0..n)
        .filter(|_| propose(&t_star, &m_mat, &b, &mut rng).is_some())
        .count();
    Ok(if n == 0 { 1.0 } else { accepted as f64 / n as f64 })
}

fn propose(t_star: &DVector<f64>, m_mat: &DMatrix<f64>, b: &DVector<f64>, rng: &mut impl RngCore) -> Option<DVector<f64>> {
    let eps = DVector::from_fn(t_star.len(), |_, _| standard_normal(rng));
    let z = t_star + &eps;
    let u = uniform(rng);
    if !b.is_empty() && (m_mat * &z - b).min() < 0.0 {
        return None;
    }
    let accept = (-eps.dot(t_star)).exp().min(1.0);
    (u < accept).then_some(z)
}

/// Coordinate-wise Gibbs sampling in reduced coordinates, started at the
/// coordinates of the mode.
pub fn sample_gibbs(
    cond: &ConditionedGaussian,
    start: &DVector<f64>,
    constraints: &Polyhedron,
    config: &SamplerConfig,
) -> Result<SampleBatch> {
    let (m_mat, b) = constraints.reduce(cond)?;
    let p = cond.reduced_dim();
    let mut z = cond.whitened().coordinates(start);
    let k = b.len();
    let start_margin = if k == 0 { 0.0 } else { (&m_mat * &z - &b).min() };
    let scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if start_margin < -1e-8 * scale {
        return Err(CgpError::Infeasible(format!(
            "Gibbs start violates a constraint by {:.3e}",
            -start_margin
        )));
    }
    let mut rng = stream_rng(config.seed, 0);
    let thin = config.thinning.max(1);
    let total = config.burn_in + thin * config.n_samples;
    let mut draws = Vec::with_capacity(config.n_samples);
    for sweep in 0..total {
        let mut resid = &m_mat * &z - &b;
        for j in 0..p {
            let col = m_mat.column(j);
            let zj = z[j];
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..k {
                let a = col[i];
                if a == 0.0 {
                    continue;
                }
                let bound = zj - resid[i].max(0.0) / a;
                if a > 0.0 {
                    lo = lo.max(bound);
                } else {
                    hi = hi.min(bound);
                }
            }
            let new = if hi - lo <= 0.0 {
                zj.clamp(lo.min(hi), hi.max(lo))
            } else {
                std_truncnorm(lo, hi, &mut rng)
            };
            let delta = new - zj;
            if delta != 0.0 {
                resid.axpy(delta, &col, 1.0);
                z[j] = new;
            }
        }
        if sweep >= config.burn_in && (sweep - config.burn_in + 1).is_multiple_of(thin) {
            draws.push(cond.point(&z));
        }
    }
    let ess = effective_sample_size(&draws);
    Ok(SampleBatch {
        draws,
        method: SamplerMethod::Gibbs,
        acceptance_rate: None,
        proposals: total,
        effective_sample_size: Some(ess),
    })
}

/// Per-coordinate effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(draws: &[DVector<f64>]) -> Vec<f64> {
    let n = draws.len();
    let Some(first) = draws.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|j| {
            let x: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            ess_1d(&x)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|e| e.min(n as f64))
        .collect()
}

fn ess_1d(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let acov = |lag: usize| -> f64 {
        (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / n as f64
    };
    let c0 = acov(0);
    // Coordinates fixed by the data only move by rounding.
    let noise = 1e-12 * (mean.abs() + 1.0);
    if c0 <= noise * noise {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    // τ = −1 + 2 Σ Γ_m where Γ_m pairs lags (2m, 2m+1).
    let tau = (2.0 * sum - 1.0).max(1e-12);
    n as f64 / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_and_normal_are_deterministic() {
        let mut a = stream_rng(7, 3);
        let mut b = stream_rng(7, 3);
        let xs: Vec<f64> = (0..10).map(|_| standard_normal(&mut a)).collect();
        let ys: Vec<f64> = (0..10).map(|_| standard_normal(&mut b)).collect();
        assert_eq!(xs, ys);
        let mut c = stream_rng(7, 4);
        assert_ne!(standard_normal(&mut c), xs[0]);
        let u = uniform(&mut a);
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn truncnorm_rejects_empty_interval() {
        let mut rng = stream_rng(1, 0);
        assert!(truncnorm_1d(0.0, 1.0, 1.0, 1.0, &mut rng).is_err());
        assert!(truncnorm_1d(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn truncnorm_stays_in_range_far_in_tail() {
        let mut rng = stream_rng(2, 0);
        for &(lo, hi) in &[(30.0, f64::INFINITY), (29.0, 29.5), (-31.0, -30.0), (-0.1, 0.05), (0.2, 4.0)] {
            for _ in 0..200 {
                let v = truncnorm_1d(0.0, 1.0, lo, hi, &mut rng).unwrap();
                assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
        let v = truncnorm_1d(10.0, 2.0, 11.0, 12.0, &mut rng).unwrap();
        assert!((11.0..=12.0).contains(&v));
    }

    #[test]
    fn identity_equalities_pin_the_point() {
        let gamma = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let cond = condition_on_equalities(&gamma, &DMatrix::identity(3, 3), &y, 0.0).unwrap();
        assert_relative_eq!(cond.mean(), &y, epsilon = 1e-12);
        assert_eq!(cond.reduced_dim(), 0);
        assert_eq!(cond.null_basis().ncols(), 0);
    }

    #[test]
    fn no_data_gives_prior() {
        let gamma = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        let cond = condition_on_equalities(&gamma, &DMatrix::zeros(0, 3), &DVector::zeros(0), 0.0).unwrap();
        assert_eq!(cond.mean(), &DVector::zeros(3));
        assert_relative_eq!(cond.reduced_cov(), &gamma, epsilon = 1e-12);
    }

    #[test]
    fn gibbs_pins_zero_width_coordinate() {
        // z0 >= 0 and -z0 >= 0 force z0 = 0; z1 >= -1 is free-ish.
        let gamma = DMatrix::identity(2, 2);
        let cond = condition_on_equalities(&gamma, &DMatrix::zeros(0, 2), &DVector::zeros(0), 0.0).unwrap();
        let poly = Polyhedron::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, -1.0]),
        )
        .unwrap();
        let cfg = SamplerConfig {
            method: SamplerMethod::Gibbs,
            seed: 3,
            n_samples: 200,
            burn_in: 10,
            thinning: 1,
            ..SamplerConfig::default()
        };
        let batch = sample_gibbs(&cond, &DVector::zeros(2), &poly, &cfg).unwrap();
        assert_eq!(batch.len(), 200);
        for d in &batch.draws {
            assert_eq!(d[0], 0.0);
            assert!(d[1] >= -1.0);
        }
        let again = sample_gibbs(&cond, &DVector::zeros(2), &poly, &cfg).unwrap();
        assert_eq!(batch, again);
    }

    #[test]
    fn loose_constraints_accept_almost_everything() {
        let gamma = DMatrix::from_fn(4, 4, |i, j| (-((i as f64 - j as f64).powi(2)) / 2.0).exp());
        let a = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_element(1, 0.3);
        let cond = condition_on_equalities(&gamma, &a, &y, 1e-10).unwrap();
        let poly = Polyhedron::new(DMatrix::identity(4, 4), DVector::from_element(4, -50.0)).unwrap();
        let cfg = SamplerConfig {
            n_samples: 500,
            seed: 11,
            ..SamplerConfig::default()
        };
        let batch = sample_rejection_from_mode(&cond, cond.mean(), &poly, &cfg).unwrap();
        assert!(batch.acceptance_rate.unwrap() >= 0.99);
        assert_eq!(batch.len(), 500);
    }

    #[test]
    fn low_acceptance_is_an_error() {
        // Mode at the corner of a thin slab far out: z0 in [6, 6.001].
        let cond = condition_on_equalities(&DMatrix::identity(1, 1), &DMatrix::zeros(0, 1), &DVector::zeros(0), 0.0)
            .unwrap();
        let poly = Polyhedron::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![6.0, -6.000001]),
        )
        .unwrap();
        let cfg = SamplerConfig {
            n_samples: 5,
            max_rejection_tries: 100,
            ..SamplerConfig::default()
        };
        let mode = DVector::from_element(1, 6.0);
        assert!(matches!(
            sample_rejection_from_mode(&cond, &mode, &poly, &cfg),
            Err(CgpError::LowAcceptance { .. })
        ));
    }

    #[test]
    fn ess_of_independent_draws_is_near_n() {
        let mut rng = stream_rng(5, 0);
        let draws: Vec<DVector<f64>> = (0..2000).map(|_| DVector::from_element(1, standard_normal(&mut rng))).collect();
        let ess = effective_sample_size(&draws);
        assert!(ess[0] > 1500.0, "{}", ess[0]);
        let constant = vec![DVector::from_element(1, 1.0); 50];
        assert_eq!(effective_sample_size(&constant), vec![50.0]);
    }
}

//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use cgp_core::cli::{load_config, load_data};
use cgp_core::{Emulator, RunConfig};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn example(name: &str) -> (RunConfig, Vec<Vec<f64>>, Vec<f64>) {
    let dir = configs_dir().join(name);
    let cfg = load_config(&dir.join("config.json"), None).expect("example config loads");
    let (x, y) = load_data(&dir.join("data.csv")).expect("example data loads");
    (cfg, x, y)
}

pub fn fit_example(name: &str) -> Emulator {
    let (cfg, x, y) = example(name);
    Emulator::fit(cfg, x, y).expect("example fits")
}

pub const EXAMPLES: [&str; 11] = [
    "log_growth_monotone",
    "monotone_c1_feasible_mean",
    "monotone_c1_infeasible_mean",
    "monotone_c0",
    "positive",
    "bounded",
    "convex",
    "isotonic_2d",
    "isotonic_first_input",
    "convergence_bounded",
    "convergence_monotone",
];

/// Test-side RNG, deliberately a different generator from the library's.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unif(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn unif_in(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unif(rng)
}

pub fn gauss(rng: &mut impl RngCore) -> f64 {
    // Marsaglia polar method.
    loop {
        let u = 2.0 * unif(rng) - 1.0;
        let v = 2.0 * unif(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// 1001 points `i / 1000`.
pub fn unit_grid_1001() -> Vec<f64> {
    (0..=1000).map(|i| i as f64 / 1000.0).collect()
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Composite 5-point Gauss–Legendre over `[a, b]`, split at `breaks`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], panels: usize) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let lo = w[0] + p as f64 * h;
            let mid = lo + 0.5 * h;
            for (x, wt) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
                total += 0.5 * h * wt * f(mid + 0.5 * h * x);
            }
        }
    }
    total
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Raw moments `E[X^k]`, `k = 0..=4`, of `N(mean, sd²)` truncated to
/// `[lo, hi]`, by quadrature on a finite window.
pub fn truncnorm_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> [f64; 5] {
    let a = lo.max(mean - 40.0 * sd);
    let b = hi.min(mean + 40.0 * sd);
    let dens = |x: f64| std_normal_pdf((x - mean) / sd);
    let z = gauss_legendre(dens, a, b, &[mean], 400);
    let mut out = [1.0; 5];
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        *o = gauss_legendre(|x| x.powi(k as i32) * dens(x), a, b, &[mean], 400) / z;
    }
    out
}

/// Dual projected gradient for `min ½cᵀΓ⁻¹c` s.t. `Ac = y`, `Gc ≥ h`.
///
/// The dual variables are `(ν, λ ≥ 0)` and `c = Γ(Aᵀν + Gᵀλ)`.
pub fn dual_projected_gradient(
    gamma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    max_iter: usize,
) -> DVector<f64> {
    let n = a.nrows();
    let k = g.nrows();
    let m = gamma.nrows();
    let mut b = DMatrix::zeros(n + k, m);
    b.rows_mut(0, n).copy_from(a);
    b.rows_mut(n, k).copy_from(g);
    let rhs = DVector::from_iterator(n + k, y.iter().chain(h.iter()).copied());
    let q = &b * gamma * b.transpose();
    let lip = q.symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let mut w = DVector::<f64>::zeros(n + k);
    for _ in 0..max_iter {
        // Ascent on  −½ wᵀQw + rhsᵀw.
        let grad = &rhs - &q * &w;
        let mut next = &w + step * grad;
        for i in n..n + k {
            next[i] = next[i].max(0.0);
        }
        let change = (&next - &w).amax();
        w = next;
        if change < 1e-16 {
            break;
        }
    }
    gamma * b.transpose() * w
}

/// Random SPD matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut impl RngCore, m: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(m, m, |_, _| gauss(rng));
    let q = raw.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| unif_in(rng, lo, hi)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

pub fn random_matrix(rng: &mut impl RngCore, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gauss(rng))
}

/// Sample mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Fourth central sample moment.
pub fn central4(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n
}

/// Largest drop `v[i] − v[i+1]` of consecutive values (0 when none).
pub fn max_drop(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

/// Most negative second difference `v[i−1] − 2v[i] + v[i+1]`, negated.
pub fn max_concavity(v: &[f64]) -> f64 {
    v.windows(3).map(|w| -(w[0] - 2.0 * w[1] + w[2])).fold(0.0, f64::max)
}

/// Prints one PASS/FAIL line and fails the test on FAIL.
pub fn report(criterion: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("PASS  {criterion}: {detail}"),
        Err(detail) => {
            println!("FAIL  {criterion}: {detail}");
            panic!("{criterion} failed: {detail}");
        }
    }
}

/// `Err` with a message when `cond` is false.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Hat `j` of a uniform grid with `n` subdivisions written as a sum of
/// ramps `r(x − c)` over the ghost-extended knots `u_{j−1}, u_j, u_{j+1}`.
/// `order` 0 gives `h_j`, 1 its primitive from 0, 2 the second primitive.
pub fn ramp_basis(n: usize, j: usize, order: u32, x: f64) -> f64 {
    let d = 1.0 / n as f64;
    let u = j as f64 * d;
    let pos = |t: f64| t.max(0.0);
    let r1 = |t: f64| pos(t);
    let r2 = |t: f64| pos(t).powi(2) / 2.0;
    let r3 = |t: f64| pos(t).powi(3) / 6.0;
    [(u - d, 1.0), (u, -2.0), (u + d, 1.0)]
        .iter()
        .map(|&(c, w)| {
            w / d
                * match order {
                    0 => r1(x - c),
                    1 => r2(x - c) - r2(-c),
                    _ => r3(x - c) - r3(-c) - x * r2(-c),
                }
        })
        .sum()
}

//! Worked examples for the model, mode, sampler and posterior layers, run
//! against the bundled configurations and independent oracles.

mod common;

use approx::assert_relative_eq;
use cgp_core::kernel::KernelFamily;
use cgp_core::linalg::jittered_cholesky;
use cgp_core::model::Direction;
use cgp_core::posterior::{
    inequality_mean_curve, inequality_mode_curve, kriging_mean, kriging_mean_kernel_form, paths_with,
    quantile_envelope, PredictionGrid,
};
use cgp_core::tmvn::{
    condition_on_equalities, sample_gibbs, sample_rejection_from_mode, stream_rng, truncnorm_1d, SamplerConfig,
    SamplerMethod,
};
use cgp_core::{
    solve_mode, DesignData, FiniteDimModel, KernelSpec, KnotGrid, ModelOptions, Polyhedron, QuadraticProgram,
};
use common::*;
use nalgebra::{DMatrix, DVector};

fn unit_grid(n: usize) -> PredictionGrid {
    PredictionGrid::from_points((0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect()).unwrap()
}

#[test]
fn model_sizes_of_the_bundled_configurations() {
    let cases = [
        ("bounded", 51, 102),
        ("monotone_c0", 51, 50),
        ("monotone_c1_feasible_mean", 52, 51),
        ("convex", 53, 51),
        ("isotonic_2d", 64, 112),
        ("isotonic_first_input", 576, 552),
    ];
    for (name, m, k) in cases {
        let emu = fit_example(name);
        assert_eq!(emu.model().n_coefficients(), m, "{name}");
        assert_eq!(emu.model().inequality().count(), k, "{name}");
    }
    let emu = fit_example("log_growth_monotone");
    assert_eq!(emu.model().design_matrix().nrows(), 7);
    let a = emu.model().design_matrix();
    let y = emu.model().equality_rhs();
    assert!((a * emu.kriging_coefficients() - y).amax() < 1e-10);
}

/// `∂^{p+q}/∂x^p∂x'^q` of `K` by central differences of `eval`, with one
/// Richardson step.
fn fd_mixed(k: &KernelSpec, x: f64, xp: f64, p: u32, q: u32) -> f64 {
    let stencil = |order: u32| -> Vec<(f64, f64)> {
        match order {
            0 => vec![(0.0, 1.0)],
            1 => vec![(-1.0, -0.5), (1.0, 0.5)],
            _ => vec![(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        }
    };
    let at = |h: f64| {
        let mut acc = 0.0;
        for (a, wa) in stencil(p) {
            for (b, wb) in stencil(q) {
                acc += wa * wb * k.eval(&[x + a * h], &[xp + b * h]).unwrap();
            }
        }
        acc / h.powi((p + q) as i32)
    };
    let h = 4e-3;
    (4.0 * at(h / 2.0) - at(h)) / 3.0
}

#[test]
fn gamma_entries_match_finite_differences_of_the_kernel() {
    for name in ["monotone_c1_feasible_mean", "convex"] {
        let emu = fit_example(name);
        let model = emu.model();
        let k = emu.unit_kernel();
        let prefix = model.prefix().len();
        let order = prefix as u32;
        let knots = KnotGrid::uniform(50).unwrap().knots().to_vec();
        // Coefficient i is the derivative of order `ord(i)` at location `loc(i)`.
        let site = |i: usize| -> (f64, u32) {
            if i < prefix {
                (0.0, i as u32)
            } else {
                (knots[i - prefix], order)
            }
        };
        let gamma = model.gamma();
        let scale = gamma.amax();
        let mut worst = 0.0f64;
        for i in 0..gamma.nrows() {
            for j in 0..gamma.ncols() {
                let (x, p) = site(i);
                let (xp, q) = site(j);
                let fd = fd_mixed(k, x, xp, p, q);
                let err = (fd - gamma[(i, j)]).abs() / gamma[(i, j)].abs().max(1e-3 * scale);
                worst = worst.max(err);
            }
        }
        assert!(worst <= 1e-4, "{name}: worst relative error {worst:.2e}");
    }
    let emu = fit_example("convex");
    let k = emu.unit_kernel();
    assert_relative_eq!(emu.model().gamma()[(1, 1)], k.eval_deriv(0.0, 0.0, 1, 1).unwrap(), max_relative = 1e-14);
}

#[test]
fn finite_covariance_approaches_the_kernel() {
    let k = KernelSpec::new(KernelFamily::Gaussian, 1.0, vec![1.0]).unwrap();
    let data = DesignData::from_1d(&[0.5], &[0.0]).unwrap();
    let build = |n: usize| {
        FiniteDimModel::build_bounded(
            &k,
            &KnotGrid::uniform(n).unwrap(),
            &data,
            f64::NEG_INFINITY,
            f64::INFINITY,
            ModelOptions::default(),
        )
        .unwrap()
    };
    let m100 = build(100);
    let gap = (m100.approx_cov(&[0.3], &[0.7]).unwrap() - k.eval(&[0.3], &[0.7]).unwrap()).abs();
    assert!(gap <= 0.01, "gap {gap}");

    let sup = |model: &FiniteDimModel| {
        let mut worst = 0.0f64;
        for i in 0..50 {
            for j in 0..50 {
                let (x, xp) = (i as f64 / 49.0, j as f64 / 49.0);
                let d = model.approx_cov(&[x], &[xp]).unwrap() - k.eval(&[x], &[xp]).unwrap();
                worst = worst.max(d.abs());
            }
        }
        worst
    };
    let (s50, s200) = (sup(&build(50)), sup(&build(200)));
    assert!(s200 < s50, "N=200 {s200:.2e} vs N=50 {s50:.2e}");
}

#[test]
fn hat_reconstruction_converges_uniformly() {
    let f = |x: f64| (6.0 * x).sin() + x * x;
    let xs = unit_grid_1001();
    let mut last = f64::INFINITY;
    for n in [10, 20, 40, 80] {
        let knots: Vec<f64> = (0..=n).map(|j| f(j as f64 / n as f64)).collect();
        let sup = xs
            .iter()
            .map(|&x| {
                let approx: f64 = (0..=n).map(|j| knots[j] * ramp_basis(n, j, 0, x)).sum();
                (approx - f(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(sup < last, "N={n}: {sup:.3e} not below {last:.3e}");
        last = sup;
    }
}

#[test]
fn evaluation_of_simple_coefficient_vectors() {
    let k = KernelSpec::new(KernelFamily::Gaussian, 1.0, vec![0.3]).unwrap();
    let grid = KnotGrid::uniform(10).unwrap();
    let data = DesignData::from_1d(&[0.5], &[0.0]).unwrap();
    let opts = ModelOptions::default();
    let bounded = FiniteDimModel::build_bounded(&k, &grid, &data, -5.0, 5.0, opts).unwrap();
    let c: Vec<f64> = (0..11).map(|j| (j as f64).sin()).collect();
    for j in 0..11 {
        assert_eq!(bounded.evaluate(&c, &[grid.knot(j)]).unwrap(), c[j]);
        assert_eq!(bounded.evaluate(&[0.0; 11], &[0.37]).unwrap(), 0.0);
    }
    let c1 = FiniteDimModel::build_monotone_c1(&k, &grid, &data, Direction::Increasing, opts).unwrap();
    let mut c = vec![0.0; 12];
    c[0] = 1.0;
    for x in [0.0, 0.123, 0.5, 1.0] {
        assert_eq!(c1.evaluate(&c, &[x]).unwrap(), 1.0);
    }
}

#[test]
fn feasible_kriging_mean_is_the_mode() {
    for name in ["monotone_c1_feasible_mean", "positive"] {
        let emu = fit_example(name);
        assert!(emu.mode().active_set.is_empty(), "{name}");
        assert_eq!(emu.mode().minimizer, *emu.kriging_coefficients(), "{name}");
    }
}

/// Solves the KKT system of the equality-constrained problem on
/// `[A; G_active]` with an explicitly inverted `Γ`.
fn kkt_oracle(
    gamma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    active: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let m = gamma.nrows();
    let n = a.nrows();
    let r = n + active.len();
    let mut b = DMatrix::zeros(r, m);
    b.rows_mut(0, n).copy_from(a);
    let mut rhs = DVector::zeros(m + r);
    rhs.rows_mut(m, n).copy_from(y);
    for (i, &row) in active.iter().enumerate() {
        b.row_mut(n + i).copy_from(&g.row(row));
        rhs[m + n + i] = h[row];
    }
    let inv = gamma.clone().try_inverse().unwrap();
    let mut kkt = DMatrix::zeros(m + r, m + r);
    kkt.view_mut((0, 0), (m, m)).copy_from(&inv);
    kkt.view_mut((0, m), (m, r)).copy_from(&(-b.transpose()));
    kkt.view_mut((m, 0), (r, m)).copy_from(&b);
    let sol = kkt.lu().solve(&rhs).unwrap();
    (sol.rows(0, m).into_owned(), sol.rows(m + n, active.len()).into_owned())
}

#[test]
fn mode_matches_explicit_inverse_solution() {
    let mut r = rng(11);
    for _ in 0..20 {
        let m = 5;
        let gamma = random_spd(&mut r, m, 0.5, 2.0);
        let a = random_matrix(&mut r, 2, m);
        let g = random_matrix(&mut r, 3, m);
        let c0 = DVector::from_fn(m, |_, _| 2.0 * gauss(&mut r));
        let y = &a * &c0;
        let h = &g * &c0 - DVector::from_fn(3, |_, _| unif(&mut r));
        let qp = QuadraticProgram::new(gamma.clone(), a.clone(), y.clone(), g.clone(), h.clone())
            .unwrap()
            .with_jitter(0.0);
        let sol = solve_mode(&qp).unwrap();
        let (c, lambda) = kkt_oracle(&gamma, &a, &y, &g, &h, &sol.active_set);
        assert!((&sol.minimizer - &c).amax() <= 1e-8 * c.amax().max(1.0));
        assert!(lambda.iter().all(|&l| l >= -1e-10), "{lambda}");
        assert!((&g * &c - &h).min() >= -1e-10);
    }
}

#[test]
fn unconstrained_conditional_draws_average_to_the_kriging_coefficients() {
    let mut r = rng(12);
    let gamma = random_spd(&mut r, 6, 0.5, 2.0);
    let a = random_matrix(&mut r, 3, 6);
    let y = DVector::from_fn(3, |_, _| gauss(&mut r));
    let cond = condition_on_equalities(&gamma, &a, &y, 0.0).unwrap();
    let n = 100_000;
    let mut rg = stream_rng(12, 0);
    let draws: Vec<DVector<f64>> = (0..n).map(|_| cond.draw(&mut rg)).collect();
    let cov = cond.covariance();
    for j in 0..6 {
        let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let (mean, var) = mean_var(&xs);
        let se = (cov[(j, j)] / n as f64).sqrt();
        assert!((mean - cond.mean()[j]).abs() <= 3.0 * se + 1e-12, "coefficient {j}");
        if cov[(j, j)] > 1e-12 {
            assert!((var / cov[(j, j)] - 1.0).abs() < 0.05, "coefficient {j}: variance {var} vs {}", cov[(j, j)]);
        }
    }
    for d in draws.iter().take(1000) {
        assert!((&a * d - &y).amax() < 1e-10);
    }
}

#[test]
fn truncated_normal_reference_moments() {
    let n = 100_000;
    let draw = |mean: f64, lo: f64, hi: f64, seed: u64| -> Vec<f64> {
        let mut rg = stream_rng(seed, 0);
        (0..n).map(|_| truncnorm_1d(mean, 1.0, lo, hi, &mut rg).unwrap()).collect()
    };
    let (m, _) = mean_var(&draw(0.0, 0.0, f64::INFINITY, 1));
    assert!((m - 0.7979).abs() < 0.01, "{m}");
    let (m, _) = mean_var(&draw(0.0, 5.0, f64::INFINITY, 2));
    assert!((m - 5.1865).abs() < 0.01, "{m}");
    let (_, v) = mean_var(&draw(0.0, -1.0, 1.0, 3));
    assert!((v - 0.2912).abs() < 0.01, "{v}");
    // The references themselves, from the quadrature oracle.
    assert!((truncnorm_moments(0.0, 1.0, 0.0, f64::INFINITY)[1] - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
    assert!((truncnorm_moments(0.0, 1.0, 5.0, f64::INFINITY)[1] - 5.1865).abs() < 1e-4);
    let mom = truncnorm_moments(0.0, 1.0, -1.0, 1.0);
    assert!((mom[2] - mom[1] * mom[1] - 0.2912).abs() < 1e-4);
}

#[test]
fn positivity_draws_satisfy_every_knot_constraint() {
    let emu = fit_example("monotone_c1_feasible_mean");
    let batch = emu.sample(2, 200).unwrap();
    assert_eq!(emu.model().inequality().count(), 51);
    for d in &batch.draws {
        assert!(emu.model().inequality().is_satisfied(d.as_slice(), 0.0));
    }
}

#[test]
fn gibbs_and_rejection_agree_on_the_positive_quadrant() {
    let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let cond = condition_on_equalities(&gamma, &DMatrix::zeros(0, 2), &DVector::zeros(0), 0.0).unwrap();
    let poly = Polyhedron::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
    let mode = DVector::zeros(2);
    let cfg = SamplerConfig {
        seed: 13,
        n_samples: 20_000,
        ..SamplerConfig::default()
    };
    let rej = sample_rejection_from_mode(&cond, &mode, &poly, &cfg).unwrap();
    let gib = sample_gibbs(
        &cond,
        &mode,
        &poly,
        &SamplerConfig {
            method: SamplerMethod::Gibbs,
            ..cfg.clone()
        },
    )
    .unwrap();
    let ess = gib.effective_sample_size.clone().unwrap();
    for j in 0..2 {
        let xr: Vec<f64> = rej.draws.iter().map(|d| d[j]).collect();
        let xg: Vec<f64> = gib.draws.iter().map(|d| d[j]).collect();
        let ((mr, vr), (mg, vg)) = (mean_var(&xr), mean_var(&xg));
        let se = (vr / xr.len() as f64 + vg / ess[j]).sqrt();
        assert!((mr - mg).abs() <= 3.0 * se, "coordinate {j}: {mr} vs {mg} (se {se})");
        assert!(xr.iter().chain(&xg).all(|&v| v >= 0.0));
    }
}

#[test]
fn unconstrained_mean_of_the_second_monotone_dataset_decreases_somewhere() {
    let emu = fit_example("monotone_c1_infeasible_mean");
    let grid = unit_grid(1001);
    let km = kriging_mean(emu.model(), &grid).unwrap();
    assert!(max_drop(&km) > 1e-6);
    let mode = inequality_mode_curve(emu.model(), emu.mode(), &grid).unwrap();
    assert!(max_drop(&mode) <= 1e-10 * 10.0);
}

#[test]
fn both_kriging_formulas_agree() {
    for name in EXAMPLES {
        let emu = fit_example(name);
        let grid = if emu.model().dim() == 1 {
            unit_grid(100)
        } else {
            PredictionGrid::uniform(&[10, 10], &[]).unwrap()
        };
        let a = kriging_mean(emu.model(), &grid).unwrap();
        let b = kriging_mean_kernel_form(emu.model(), &grid).unwrap();
        let scale = a.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        // Forward error of either formula grows with the conditioning of the
        // data covariance; 1e-8 is the floor.
        let d = emu.model().design_matrix();
        let ev = (d * emu.model().gamma() * d.transpose()).symmetric_eigenvalues();
        let tol = 1e-8f64.max(f64::EPSILON * ev.max() / ev.min());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= tol * scale, "{name}: {u} vs {v} (tolerance {tol:.1e})");
        }
    }
}

#[test]
fn convex_mode_has_non_negative_second_differences() {
    let emu = fit_example("convex");
    let mode = inequality_mode_curve(emu.model(), emu.mode(), &unit_grid(1000)).unwrap();
    assert!(max_concavity(&mode) <= 1e-10, "{}", max_concavity(&mode));
}

#[test]
fn monotone_mean_curve_is_non_decreasing() {
    let emu = fit_example("monotone_c1_feasible_mean");
    let batch = emu.sample(41, 200).unwrap();
    let grid = unit_grid(1001);
    let mean = inequality_mean_curve(emu.model(), &batch, &grid).unwrap().unwrap();
    assert!(max_drop(&mean) <= 1e-10 * 20.0);
}

#[test]
fn log_growth_envelope_on_a_coarse_grid() {
    let emu = fit_example("log_growth_monotone");
    let grid = unit_grid(100);
    let batch = emu.sample(2016, 1000).unwrap();
    let paths = paths_with(&emu.operator(&grid).unwrap(), &batch).unwrap();
    let (lo, hi) = quantile_envelope(&paths, 0.05).unwrap().unwrap();
    let inside = grid
        .points()
        .iter()
        .enumerate()
        .filter(|(i, x)| {
            let t = (20.0 * x[0] + 1.0).ln();
            let tol = 1e-12 * t.abs().max(1.0);
            lo[*i] - tol <= t && t <= hi[*i] + tol
        })
        .count();
    assert!(inside >= 90, "truth inside the envelope at {inside} of 100 points");
}

#[test]
fn c0_monotone_draws_are_non_decreasing_and_interpolate() {
    let emu = fit_example("monotone_c0");
    let batch = emu.sample(42, 40).unwrap();
    let grid = unit_grid(1001);
    let paths = paths_with(&emu.operator(&grid).unwrap(), &batch).unwrap();
    for i in 0..paths.nrows() {
        let row: Vec<f64> = paths.row(i).iter().copied().collect();
        assert!(max_drop(&row) <= 1e-10 * 8.0, "draw {i}");
    }
    let at_data = paths_with(&emu.operator(&emu.unit_points(emu.inputs()).unwrap()).unwrap(), &batch).unwrap();
    for i in 0..at_data.nrows() {
        for (k, y) in emu.unit_data().outputs().iter().enumerate() {
            assert!((at_data[(i, k)] - y).abs() < 1e-8);
        }
    }
}

#[test]
fn isotonic_surfaces_increase_along_both_axes() {
    let emu = fit_example("isotonic_2d");
    let batch = emu.sample(43, 5).unwrap();
    let side = 41;
    let axis: Vec<f64> = (0..side).map(|i| i as f64 / (side - 1) as f64).collect();
    let grid = PredictionGrid::from_axes(vec![axis.clone(), axis]).unwrap();
    let paths = paths_with(&emu.operator(&grid).unwrap(), &batch).unwrap();
    let pts = grid.points();
    for d in 0..paths.nrows() {
        for (i, p) in pts.iter().enumerate() {
            for (j, q) in pts.iter().enumerate() {
                let along_0 = q[1] == p[1] && q[0] > p[0];
                let along_1 = q[0] == p[0] && q[1] > p[1];
                if along_0 || along_1 {
                    assert!(paths[(d, j)] - paths[(d, i)] >= -1e-10 * 25.0, "draw {d}");
                }
            }
        }
    }
}

#[test]
fn jittered_kernel_matrices_factorize() {
    let k = KernelSpec::new(KernelFamily::Gaussian, 1.0, vec![0.5]).unwrap();
    let pts: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let mat = DMatrix::from_fn(20, 20, |i, j| k.eval(&[pts[i]], &[pts[j]]).unwrap());
    assert!(jittered_cholesky(&mat, 1e-10).is_ok());
}

//! Estimator curves on evaluation grids: the kriging mean, the inequality
//! mode and mean, sample paths and pointwise prediction intervals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::check_unit;
use crate::error::{CgpError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{jittered_cholesky, whiten};
use crate::model::{DesignData, FiniteDimModel};
use crate::qp::QpSolution;
use crate::tmvn::SampleBatch;

/// Evaluation points in `[0, 1]^d`. Grids built from axes are tensor grids in
/// row-major order (last coordinate fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    points: Vec<Vec<f64>>,
    axes: Option<Vec<Vec<f64>>>,
}

impl PredictionGrid {
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(CgpError::Config("prediction grid is empty".into()));
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(CgpError::DimensionMismatch { expected: d, got: p.len() });
            }
            for &v in p {
                check_unit(v)?;
            }
        }
        Ok(PredictionGrid { points, axes: None })
    }

    /// Tensor grid from per-dimension axis values.
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(CgpError::Config("prediction grid axes must be nonempty".into()));
        }
        for a in &axes {
            for &v in a {
                check_unit(v)?;
            }
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        for _ in 0..total {
            points.push(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect());
            for k in (0..axes.len()).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(PredictionGrid { points, axes: Some(axes) })
    }

    /// `resolution[k]` equispaced values per axis, plus the coordinates of
    /// `extra` points merged into each axis.
    pub fn uniform(resolution: &[usize], extra: &[Vec<f64>]) -> Result<Self> {
        let mut axes = Vec::with_capacity(resolution.len());
        for (k, &r) in resolution.iter().enumerate() {
            if r < 2 {
                return Err(CgpError::Config(format!("grid resolution {r} is below 2")));
            }
            let mut axis: Vec<f64> = (0..r).map(|i| i as f64 / (r - 1) as f64).collect();
            for p in extra {
                let v = *p.get(k).ok_or(CgpError::DimensionMismatch {
                    expected: resolution.len(),
                    got: p.len(),
                })?;
                axis.push(check_unit(v)?);
            }
            axis.sort_by(f64::total_cmp);
            axis.dedup();
            axes.push(axis);
        }
        PredictionGrid::from_axes(axes)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn axes(&self) -> Option<&[Vec<f64>]> {
        self.axes.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Sparse regressor rows of a model on a grid.
#[derive(Debug, Clone)]
pub struct GridOperator {
    rows: Vec<Vec<(usize, f64)>>,
    n_coefficients: usize,
}

impl GridOperator {
    pub fn new(model: &FiniteDimModel, grid: &PredictionGrid) -> Result<Self> {
        let rows = grid
            .points()
            .par_iter()
            .map(|x| {
                let psi = model.basis_vector(x)?;
                Ok(psi.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridOperator {
            rows,
            n_coefficients: model.n_coefficients(),
        })
    }

    pub fn apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n_coefficients {
            return Err(CgpError::DimensionMismatch {
                expected: self.n_coefficients,
                got: c.len(),
            });
        }
        Ok(self.rows.iter().map(|row| row.iter().map(|&(j, w)| w * c[j]).sum()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `ξ_I = Γ Aᵀ (A Γ Aᵀ)⁻¹ y`.
pub fn kriging_coefficients(model: &FiniteDimModel) -> Result<DVector<f64>> {
    Ok(whiten(
        model.gamma(),
        model.design_matrix(),
        model.equality_rhs(),
        model.options().jitter,
    )?
    .mean)
}

/// `Σ (ξ_I)_j ψ_j(x)` on the grid.
pub fn kriging_mean(model: &FiniteDimModel, grid: &PredictionGrid) -> Result<Vec<f64>> {
    let xi = kriging_coefficients(model)?;
    GridOperator::new(model, grid)?.apply(xi.as_slice())
}

/// `k_N(x)ᵀ K_N⁻¹ y` with `K_N(x, x') = ψ(x)ᵀ Γ ψ(x')`, where `Γ` carries the
/// same jitter as in [`kriging_coefficients`].
pub fn kriging_mean_kernel_form(model: &FiniteDimModel, grid: &PredictionGrid) -> Result<Vec<f64>> {
    let a = model.design_matrix();
    let (_, shift) = jittered_cholesky(model.gamma(), model.options().jitter)?;
    let mut gamma = model.gamma().clone();
    for i in 0..gamma.nrows() {
        gamma[(i, i)] += shift;
    }
    let ga = gamma * a.transpose();
    let k = a * &ga;
    let (l, _) = jittered_cholesky(&k, 0.0)?;
    let alpha = solve_spd(&l, model.equality_rhs());
    let weights = &ga * alpha;
    let psi = model.design_matrix_at(grid.points())?;
    Ok((psi * weights).iter().copied().collect())
}

fn solve_spd(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let w = l.solve_lower_triangular(b).expect("cholesky factor has a positive diagonal");
    l.transpose()
        .solve_upper_triangular(&w)
        .expect("cholesky factor has a positive diagonal")
}

/// `M_IK(x) = Σ μ_j ψ_j(x)`.
pub fn inequality_mode_curve(model: &FiniteDimModel, solution: &QpSolution, grid: &PredictionGrid) -> Result<Vec<f64>> {
    GridOperator::new(model, grid)?.apply(solution.minimizer.as_slice())
}

/// The curve of the batch's coefficient average; `None` for an empty batch.
pub fn inequality_mean_curve(
    model: &FiniteDimModel,
    batch: &SampleBatch,
    grid: &PredictionGrid,
) -> Result<Option<Vec<f64>>> {
    match batch.mean() {
        None => Ok(None),
        Some(c) => GridOperator::new(model, grid)?.apply(c.as_slice()).map(Some),
    }
}

/// One row per draw, one column per grid point.
pub fn sample_paths(model: &FiniteDimModel, batch: &SampleBatch, grid: &PredictionGrid) -> Result<DMatrix<f64>> {
    let op = GridOperator::new(model, grid)?;
    paths_with(&op, batch)
}

pub fn paths_with(op: &GridOperator, batch: &SampleBatch) -> Result<DMatrix<f64>> {
    let rows = batch
        .draws
        .par_iter()
        .map(|d| op.apply(d.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(rows.len(), op.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Pointwise empirical `α/2` and `1 − α/2` quantiles of the sample paths.
pub fn prediction_intervals(
    model: &FiniteDimModel,
    batch: &SampleBatch,
    grid: &PredictionGrid,
    alpha: f64,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let paths = sample_paths(model, batch, grid)?;
    quantile_envelope(&paths, alpha)
}

/// Envelope of a path matrix; `None` when there are no paths.
pub fn quantile_envelope(paths: &DMatrix<f64>, alpha: f64) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CgpError::Config(format!("interval level alpha = {alpha} is outside (0, 1]")));
    }
    let n = paths.nrows();
    if n == 0 {
        return Ok(None);
    }
    if (n as f64) < 1.0 / alpha {
        log::warn!("{n} draws are fewer than 1/alpha = {:.1}; interval quantiles are unstable", 1.0 / alpha);
    }
    let mut lower = Vec::with_capacity(paths.ncols());
    let mut upper = Vec::with_capacity(paths.ncols());
    let mut col = vec![0.0; n];
    for j in 0..paths.ncols() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = paths[(i, j)];
        }
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, alpha / 2.0));
        upper.push(quantile_sorted(&col, 1.0 - alpha / 2.0));
    }
    Ok(Some((lower, upper)))
}

/// Linear-interpolation quantile (`h = (n − 1) p`) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Exact simple-kriging mean and variance of the unapproximated process.
pub fn simple_kriging(
    kernel: &KernelSpec,
    data: &DesignData,
    points: &[Vec<f64>],
    rel_jitter: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = data.inputs();
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = kernel.eval(&x[i], &x[j])?;
        }
    }
    let (l, _) = jittered_cholesky(&k, rel_jitter)?;
    let alpha = solve_spd(&l, &DVector::from_column_slice(data.outputs()));
    points
        .par_iter()
        .map(|p| {
            let kx = DVector::from_iterator(n, x.iter().map(|xi| kernel.eval(p, xi)).collect::<Result<Vec<_>>>()?);
            let v = l.solve_lower_triangular(&kx).expect("cholesky factor has a positive diagonal");
            let var = (kernel.eval(p, p)? - v.norm_squared()).max(0.0);
            Ok((kx.dot(&alpha), var))
        })
        .collect::<Result<Vec<(f64, f64)>>>()
        .map(|pairs| pairs.into_iter().unzip())
}

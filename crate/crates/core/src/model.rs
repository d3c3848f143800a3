//! Finite-dimensional Gaussian models `Y^N(x) = Σ c_j ψ_j(x)` whose
//! functional constraints reduce to linear inequalities on the coefficients.
//!
//! | constraint    | basis ψ                     | coefficients        | inequalities            |
//! |---------------|-----------------------------|---------------------|-------------------------|
//! | bounds        | hats `h_j`                  | `Y(u_j)`            | `a ≤ ξ_j ≤ b`           |
//! | monotone C⁰   | hats `h_j`                  | `Y(u_j)`            | `ξ_j − ξ_{j−1} ≥ 0`     |
//! | monotone C¹   | `1, φ_j`                    | `Y(0), Y'(u_j)`     | `ξ_j ≥ 0`               |
//! | convex        | `1, x, φ̈_j`                 | `Y(0), Y'(0), Y''(u_j)` | `ξ_j ≥ 0`           |
//! | isotonic      | tensor hats `∏ h_{i_k}`     | `Y(u_{i_1..i_d})`   | forward differences ≥ 0 |
//!
//! Decreasing and concave variants flip the sign of the inequality rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{check_unit, Basis, KnotGrid, TensorGrid};
use crate::error::{CgpError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::DEFAULT_JITTER;

/// Default cap on the number of coefficients of a model.
pub const DEFAULT_MAX_COEFFICIENTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    #[default]
    Convex,
    Concave,
}

impl Curvature {
    pub fn sign(self) -> f64 {
        match self {
            Curvature::Convex => 1.0,
            Curvature::Concave => -1.0,
        }
    }
}

/// The functional constraint a model encodes.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `lower ≤ f ≤ upper`; either side may be infinite.
    Bounds { lower: f64, upper: f64 },
    /// Monotone, continuous but possibly non-differentiable paths.
    MonotoneC0(Direction),
    /// Monotone, continuously differentiable paths.
    MonotoneC1(Direction),
    Convex(Curvature),
    /// Monotone along the listed (0-based) input coordinates.
    Isotonic {
        dims: Vec<usize>,
        directions: Vec<Direction>,
    },
}

impl ConstraintKind {
    /// Mixed derivative order `p` of `∂^{2p}K/∂x^p∂x'^p` the model's
    /// coefficient covariance needs.
    pub fn required_mixed_order(&self) -> u32 {
        match self {
            ConstraintKind::MonotoneC1(_) => 1,
            ConstraintKind::Convex(_) => 2,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::Bounds { .. } => "bounds",
            ConstraintKind::MonotoneC0(_) => "monotone_c0",
            ConstraintKind::MonotoneC1(_) => "monotone_c1",
            ConstraintKind::Convex(_) => "convex",
            ConstraintKind::Isotonic { .. } => "isotonic",
        }
    }
}

/// Design points in `[0, 1]^d` and the observed outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl DesignData {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(CgpError::Config("design data needs at least one point".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(CgpError::DimensionMismatch {
                expected: inputs.len(),
                got: outputs.len(),
            });
        }
        let d = inputs[0].len();
        if d == 0 {
            return Err(CgpError::Config("design points need at least one coordinate".into()));
        }
        for x in &inputs {
            if x.len() != d {
                return Err(CgpError::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            for &v in x {
                check_unit(v)?;
            }
        }
        if let Some(bad) = outputs.iter().find(|v| !v.is_finite()) {
            return Err(CgpError::Config(format!("non-finite output {bad}")));
        }
        for i in 0..inputs.len() {
            for j in 0..i {
                if inputs[i] == inputs[j] {
                    return Err(CgpError::Config(format!(
                        "design points {j} and {i} coincide at {:?}",
                        inputs[i]
                    )));
                }
            }
        }
        Ok(DesignData { inputs, outputs })
    }

    /// One-dimensional convenience constructor.
    pub fn from_1d(x: &[f64], y: &[f64]) -> Result<Self> {
        DesignData::new(x.iter().map(|&v| vec![v]).collect(), y.to_vec())
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }
}

/// `Σ_k coef_k · c_{index_k} ≥ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn margin(&self, c: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * c[j]).sum::<f64>() - self.rhs
    }
}

/// Inequalities in normal form: general rows `L·c ≥ l` plus per-coefficient
/// interval bounds (infinite when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct InequalitySystem {
    dim: usize,
    rows: Vec<LinearRow>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InequalitySystem {
    pub fn unconstrained(dim: usize) -> Self {
        InequalitySystem {
            dim,
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn push_row(&mut self, row: LinearRow) -> Result<()> {
        if let Some(&(j, _)) = row.terms.iter().find(|&&(j, _)| j >= self.dim) {
            return Err(CgpError::IndexOutOfRange {
                index: j,
                max: self.dim.saturating_sub(1),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) -> Result<()> {
        if j >= self.dim {
            return Err(CgpError::IndexOutOfRange {
                index: j,
                max: self.dim.saturating_sub(1),
            });
        }
        if lower > upper {
            return Err(CgpError::Config(format!("empty interval [{lower}, {upper}]")));
        }
        self.lower[j] = lower;
        self.upper[j] = upper;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    /// Number of scalar inequalities, counting each finite bound once.
    pub fn count(&self) -> usize {
        self.rows.len()
            + self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// All inequalities as dense rows `G c ≥ h`: general rows first, then
    /// finite lower bounds, then finite upper bounds (as `−c_j ≥ −b`).
    pub fn dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.count();
        let mut g = DMatrix::zeros(k, self.dim);
        let mut h = DVector::zeros(k);
        let mut r = 0;
        for row in &self.rows {
            for &(j, a) in &row.terms {
                g[(r, j)] += a;
            }
            h[r] = row.rhs;
            r += 1;
        }
        for (j, &lo) in self.lower.iter().enumerate() {
            if lo.is_finite() {
                g[(r, j)] = 1.0;
                h[r] = lo;
                r += 1;
            }
        }
        for (j, &hi) in self.upper.iter().enumerate() {
            if hi.is_finite() {
                g[(r, j)] = -1.0;
                h[r] = -hi;
                r += 1;
            }
        }
        (g, h)
    }

    /// Smallest margin over all inequalities (`+∞` when there are none).
    pub fn min_margin(&self, c: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for row in &self.rows {
            worst = worst.min(row.margin(c));
        }
        for (j, &v) in c.iter().enumerate().take(self.dim) {
            worst = worst.min(v - self.lower[j]).min(self.upper[j] - v);
        }
        worst
    }

    pub fn is_satisfied(&self, c: &[f64], tol: f64) -> bool {
        self.min_margin(c) >= -tol
    }
}

/// Intercept/slope columns that precede the basis coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prefix {
    None,
    /// `ζ = Y(0)`.
    Intercept,
    /// `ζ = Y(0)`, `κ = Y'(0)`.
    InterceptSlope,
}

impl Prefix {
    pub fn len(self) -> usize {
        match self {
            Prefix::None => 0,
            Prefix::Intercept => 1,
            Prefix::InterceptSlope => 2,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// Build-time knobs shared by all constraint kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    /// Relative jitter `ε` in `Γ + ε·mean(diag Γ)·I`.
    pub jitter: f64,
    pub max_coefficients: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            jitter: DEFAULT_JITTER,
            max_coefficients: DEFAULT_MAX_COEFFICIENTS,
        }
    }
}

/// A Gaussian coefficient vector `c ~ N(0, Γ)`, the interpolation system
/// `A c = y` and the inequality system encoding the functional constraint.
#[derive(Debug, Clone)]
pub struct FiniteDimModel {
    kind: ConstraintKind,
    basis: Basis,
    prefix: Prefix,
    gamma: DMatrix<f64>,
    design_matrix: DMatrix<f64>,
    equality_rhs: DVector<f64>,
    inequality: InequalitySystem,
    labels: Vec<String>,
    options: ModelOptions,
}

impl FiniteDimModel {
    /// Boundedness `a ≤ Y ≤ b` on the hat basis.
    pub fn build_bounded(
        kernel: &KernelSpec,
        grid: &KnotGrid,
        data: &DesignData,
        lower: f64,
        upper: f64,
        options: ModelOptions,
    ) -> Result<Self> {
        let kind = ConstraintKind::Bounds { lower, upper };
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(CgpError::Config(format!(
                "bounds need lower < upper, got [{lower}, {upper}]"
            )));
        }
        check_common(kernel, &kind, data, 1, grid.len(), options)?;
        if let Some((i, y)) = data
            .outputs()
            .iter()
            .enumerate()
            .find(|(_, &y)| y < lower || y > upper)
        {
            return Err(CgpError::Infeasible(format!(
                "observation {i} (y = {y}) lies outside [{lower}, {upper}]"
            )));
        }
        let m = grid.len();
        let mut inequality = InequalitySystem::unconstrained(m);
        for j in 0..m {
            inequality.set_bounds(j, lower, upper)?;
        }
        let gamma = knot_gamma(kernel, grid);
        Self::assemble(kind, Basis::Hat(grid.clone()), Prefix::None, gamma, data, inequality, options)
    }

    /// Monotonicity through the knot values of the hat basis.
    pub fn build_monotone_c0(
        kernel: &KernelSpec,
        grid: &KnotGrid,
        data: &DesignData,
        direction: Direction,
        options: ModelOptions,
    ) -> Result<Self> {
        let kind = ConstraintKind::MonotoneC0(direction);
        check_common(kernel, &kind, data, 1, grid.len(), options)?;
        let m = grid.len();
        let s = direction.sign();
        let mut inequality = InequalitySystem::unconstrained(m);
        for j in 1..m {
            inequality.push_row(LinearRow {
                terms: vec![(j, s), (j - 1, -s)],
                rhs: 0.0,
            })?;
        }
        let gamma = knot_gamma(kernel, grid);
        Self::assemble(kind, Basis::Hat(grid.clone()), Prefix::None, gamma, data, inequality, options)
    }

    /// Monotonicity through non-negative derivative values at the knots.
    pub fn build_monotone_c1(
        kernel: &KernelSpec,
        grid: &KnotGrid,
        data: &DesignData,
        direction: Direction,
        options: ModelOptions,
    ) -> Result<Self> {
        let kind = ConstraintKind::MonotoneC1(direction);
        check_common(kernel, &kind, data, 1, grid.len() + 1, options)?;
        let knots = grid.knots();
        let m = knots.len() + 1;
        let mut gamma = DMatrix::zeros(m, m);
        gamma[(0, 0)] = kernel.deriv_unchecked(0.0, 0.0, 0, 0);
        for (i, &ui) in knots.iter().enumerate() {
            gamma[(i + 1, 0)] = kernel.deriv_unchecked(ui, 0.0, 1, 0);
            for (j, &uj) in knots.iter().enumerate().take(i + 1) {
                gamma[(i + 1, j + 1)] = kernel.deriv_unchecked(ui, uj, 1, 1);
            }
        }
        mirror_lower(&mut gamma);
        let mut inequality = InequalitySystem::unconstrained(m);
        for j in 1..m {
            positivity(&mut inequality, j, direction.sign())?;
        }
        Self::assemble(kind, Basis::IntHat(grid.clone()), Prefix::Intercept, gamma, data, inequality, options)
    }

    /// Convexity through non-negative second-derivative values at the knots.
    pub fn build_convex(
        kernel: &KernelSpec,
        grid: &KnotGrid,
        data: &DesignData,
        curvature: Curvature,
        options: ModelOptions,
    ) -> Result<Self> {
        let kind = ConstraintKind::Convex(curvature);
        check_common(kernel, &kind, data, 1, grid.len() + 2, options)?;
        let knots = grid.knots();
        let m = knots.len() + 2;
        let k = |x: f64, xp: f64, p: u32, q: u32| kernel.deriv_unchecked(x, xp, p, q);
        let mut gamma = DMatrix::zeros(m, m);
        gamma[(0, 0)] = k(0.0, 0.0, 0, 0);
        gamma[(1, 0)] = k(0.0, 0.0, 1, 0);
        gamma[(1, 1)] = k(0.0, 0.0, 1, 1);
        for (i, &ui) in knots.iter().enumerate() {
            gamma[(i + 2, 0)] = k(ui, 0.0, 2, 0);
            gamma[(i + 2, 1)] = k(ui, 0.0, 2, 1);
            for (j, &uj) in knots.iter().enumerate().take(i + 1) {
                gamma[(i + 2, j + 2)] = k(ui, uj, 2, 2);
            }
        }
        mirror_lower(&mut gamma);
        let mut inequality = InequalitySystem::unconstrained(m);
        for j in 2..m {
            positivity(&mut inequality, j, curvature.sign())?;
        }
        Self::assemble(
            kind,
            Basis::Int2Hat(grid.clone()),
            Prefix::InterceptSlope,
            gamma,
            data,
            inequality,
            options,
        )
    }

    /// Isotonicity in `d >= 2` dimensions along the coordinates in `dims`
    /// (0-based), on a tensor grid of hats. An empty `dims` gives plain
    /// tensor interpolation.
    pub fn build_isotonic(
        kernel: &KernelSpec,
        grids: &[KnotGrid],
        data: &DesignData,
        dims: &[usize],
        directions: &[Direction],
        options: ModelOptions,
    ) -> Result<Self> {
        let d = grids.len();
        if d < 2 {
            return Err(CgpError::Config(
                "isotonic models need at least two input dimensions".into(),
            ));
        }
        if dims.len() != directions.len() {
            return Err(CgpError::Config(format!(
                "{} monotone dimensions but {} directions",
                dims.len(),
                directions.len()
            )));
        }
        for (i, &k) in dims.iter().enumerate() {
            if k >= d {
                return Err(CgpError::Config(format!(
                    "monotone dimension {} is outside 1..={d}",
                    k + 1
                )));
            }
            if dims[..i].contains(&k) {
                return Err(CgpError::Config(format!("monotone dimension {} repeated", k + 1)));
            }
        }
        let kind = ConstraintKind::Isotonic {
            dims: dims.to_vec(),
            directions: directions.to_vec(),
        };
        let m: usize = grids.iter().try_fold(1usize, |acc, g| acc.checked_mul(g.len())).unwrap_or(usize::MAX);
        check_common(kernel, &kind, data, d, m, options)?;
        let tensor = TensorGrid::new(grids.to_vec())?;
        let nodes: Vec<Vec<f64>> = (0..m).map(|f| tensor.node(f)).collect();
        let mut gamma = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                gamma[(i, j)] = kernel.eval_unchecked(&nodes[i], &nodes[j]);
            }
        }
        mirror_lower(&mut gamma);
        let mut inequality = InequalitySystem::unconstrained(m);
        for (&k, &dir) in dims.iter().zip(directions) {
            let s = dir.sign();
            let stride = tensor.strides()[k];
            for flat in 0..m {
                let multi = tensor.multi_index(flat);
                if multi[k] == 0 {
                    continue;
                }
                inequality.push_row(LinearRow {
                    terms: vec![(flat, s), (flat - stride, -s)],
                    rhs: 0.0,
                })?;
            }
        }
        Self::assemble(kind, Basis::Tensor(tensor), Prefix::None, gamma, data, inequality, options)
    }

    fn assemble(
        kind: ConstraintKind,
        basis: Basis,
        prefix: Prefix,
        gamma: DMatrix<f64>,
        data: &DesignData,
        inequality: InequalitySystem,
        options: ModelOptions,
    ) -> Result<Self> {
        let m = prefix.len() + basis.len();
        debug_assert_eq!(gamma.nrows(), m);
        let labels = coefficient_labels(&basis, prefix);
        let mut model = FiniteDimModel {
            kind,
            basis,
            prefix,
            gamma,
            design_matrix: DMatrix::zeros(0, m),
            equality_rhs: DVector::from_column_slice(data.outputs()),
            inequality,
            labels,
            options,
        };
        let n = data.len();
        let mut a = DMatrix::zeros(n, m);
        let mut row = vec![0.0; m];
        for (i, x) in data.inputs().iter().enumerate() {
            model.basis_vector_into(x, &mut row)?;
            for (j, &v) in row.iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        model.design_matrix = a;
        Ok(model)
    }

    /// Generic entry point dispatching on the constraint kind.
    pub fn build(
        kernel: &KernelSpec,
        grids: &[KnotGrid],
        data: &DesignData,
        kind: &ConstraintKind,
        options: ModelOptions,
    ) -> Result<Self> {
        let one_d = || -> Result<&KnotGrid> {
            match grids {
                [g] => Ok(g),
                _ => Err(CgpError::Config(format!(
                    "{} models are one-dimensional; got {} grids",
                    kind.name(),
                    grids.len()
                ))),
            }
        };
        match kind {
            ConstraintKind::Bounds { lower, upper } => {
                Self::build_bounded(kernel, one_d()?, data, *lower, *upper, options)
            }
            ConstraintKind::MonotoneC0(dir) => Self::build_monotone_c0(kernel, one_d()?, data, *dir, options),
            ConstraintKind::MonotoneC1(dir) => Self::build_monotone_c1(kernel, one_d()?, data, *dir, options),
            ConstraintKind::Convex(c) => Self::build_convex(kernel, one_d()?, data, *c, options),
            ConstraintKind::Isotonic { dims, directions } => {
                Self::build_isotonic(kernel, grids, data, dims, directions, options)
            }
        }
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn prefix(&self) -> Prefix {
        self.prefix
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_coefficients(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.design_matrix
    }

    pub fn equality_rhs(&self) -> &DVector<f64> {
        &self.equality_rhs
    }

    pub fn inequality(&self) -> &InequalitySystem {
        &self.inequality
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn options(&self) -> ModelOptions {
        self.options
    }

    /// The full regressor vector at `x`: prefix columns, then basis values.
    pub fn basis_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_coefficients()];
        self.basis_vector_into(x, &mut out)?;
        Ok(out)
    }

    fn basis_vector_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.prefix.len();
        match self.prefix {
            Prefix::None => {}
            Prefix::Intercept => out[0] = 1.0,
            Prefix::InterceptSlope => {
                out[0] = 1.0;
                out[1] = x.first().copied().map(check_unit).transpose()?.unwrap_or(0.0);
            }
        }
        self.basis.eval_into(x, &mut out[p..])
    }

    /// `Y^N(x) = Σ c_j ψ_j(x)`.
    pub fn evaluate(&self, coeffs: &[f64], x: &[f64]) -> Result<f64> {
        if coeffs.len() != self.n_coefficients() {
            return Err(CgpError::DimensionMismatch {
                expected: self.n_coefficients(),
                got: coeffs.len(),
            });
        }
        let psi = self.basis_vector(x)?;
        Ok(psi.iter().zip(coeffs).map(|(a, b)| a * b).sum())
    }

    pub fn evaluate_on_grid(&self, coeffs: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let design = self.design_matrix_at(points)?;
        if coeffs.len() != self.n_coefficients() {
            return Err(CgpError::DimensionMismatch {
                expected: self.n_coefficients(),
                got: coeffs.len(),
            });
        }
        Ok((design * DVector::from_column_slice(coeffs)).iter().copied().collect())
    }

    /// Regressor matrix with one row per point.
    pub fn design_matrix_at(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let m = self.n_coefficients();
        let mut out = DMatrix::zeros(points.len(), m);
        let mut row = vec![0.0; m];
        for (i, x) in points.iter().enumerate() {
            self.basis_vector_into(x, &mut row)?;
            for (j, &v) in row.iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `K_N(x, x') = ψ(x)ᵀ Γ ψ(x')`.
    pub fn approx_cov(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        let a = DVector::from_vec(self.basis_vector(x)?);
        let b = DVector::from_vec(self.basis_vector(xp)?);
        Ok(a.dot(&(&self.gamma * b)))
    }
}

fn check_common(
    kernel: &KernelSpec,
    kind: &ConstraintKind,
    data: &DesignData,
    dim: usize,
    m: usize,
    options: ModelOptions,
) -> Result<()> {
    kernel.validate()?;
    if kernel.dim() != dim {
        return Err(CgpError::DimensionMismatch {
            expected: dim,
            got: kernel.dim(),
        });
    }
    if data.dim() != dim {
        return Err(CgpError::DimensionMismatch {
            expected: dim,
            got: data.dim(),
        });
    }
    kernel.capability(kind)?;
    if m > options.max_coefficients {
        return Err(CgpError::TooLarge {
            requested: m,
            cap: options.max_coefficients,
        });
    }
    if m <= data.len() {
        return Err(CgpError::InfeasibleSize {
            coefficients: m,
            observations: data.len(),
        });
    }
    Ok(())
}

fn knot_gamma(kernel: &KernelSpec, grid: &KnotGrid) -> DMatrix<f64> {
    let u = grid.knots();
    let m = u.len();
    let mut gamma = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            gamma[(i, j)] = kernel.eval_unchecked(&[u[i]], &[u[j]]);
        }
    }
    mirror_lower(&mut gamma);
    gamma
}

fn mirror_lower(gamma: &mut DMatrix<f64>) {
    let m = gamma.nrows();
    for i in 0..m {
        for j in 0..i {
            gamma[(j, i)] = gamma[(i, j)];
        }
    }
}

fn positivity(ineq: &mut InequalitySystem, j: usize, sign: f64) -> Result<()> {
    if sign > 0.0 {
        ineq.set_bounds(j, 0.0, f64::INFINITY)
    } else {
        ineq.set_bounds(j, f64::NEG_INFINITY, 0.0)
    }
}

fn coefficient_labels(basis: &Basis, prefix: Prefix) -> Vec<String> {
    let mut labels = Vec::with_capacity(prefix.len() + basis.len());
    match prefix {
        Prefix::None => {}
        Prefix::Intercept => labels.push("zeta".to_string()),
        Prefix::InterceptSlope => {
            labels.push("zeta".to_string());
            labels.push("kappa".to_string());
        }
    }
    match basis {
        Basis::Tensor(t) => {
            for flat in 0..t.size() {
                let idx: Vec<String> = t.multi_index(flat).iter().map(|i| i.to_string()).collect();
                labels.push(format!("xi[{}]", idx.join(",")));
            }
        }
        _ => labels.extend((0..basis.len()).map(|j| format!("xi[{j}]"))),
    }
    labels
}

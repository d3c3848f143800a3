//! The inequality mode: `argmin ½ cᵀΓ⁻¹c` subject to `A c = y`, `G c ≥ h`.
//!
//! `Γ⁻¹` is never formed. With `Γ = L Lᵀ` and the null-space split of
//! [`whiten`], every feasible `c` is `ξ_I + W t` and the objective becomes
//! `½|v₀|² + ½|t|²`, so the problem reduces to the projection of the origin
//! onto `{t : M t ≥ b}` with `M = G W`, `b = h − G ξ_I`. That projection is
//! solved by a dual active-set method (identity Hessian).

use nalgebra::{DMatrix, DVector};

use crate::error::{CgpError, Result};
use crate::linalg::{whiten, Whitened, DEFAULT_JITTER};
use crate::model::FiniteDimModel;

/// Constraint `i` is treated as violated when its slack is below
/// `-IMPROVEMENT_TOL · (1 + |b_i|)`.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

/// `min ½ cᵀΓ⁻¹c` s.t. `eq_matrix · c = eq_rhs`, `ineq_matrix · c ≥ ineq_rhs`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub gamma: DMatrix<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    /// Relative jitter for the factorization of `gamma`.
    pub jitter: f64,
}

impl QuadraticProgram {
    pub fn new(
        gamma: DMatrix<f64>,
        eq_matrix: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_matrix: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let m = gamma.nrows();
        let checks = [
            (gamma.ncols(), m),
            (eq_matrix.ncols(), m),
            (ineq_matrix.ncols(), m),
            (eq_rhs.len(), eq_matrix.nrows()),
            (ineq_rhs.len(), ineq_matrix.nrows()),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(CgpError::DimensionMismatch { expected, got });
            }
        }
        Ok(QuadraticProgram {
            gamma,
            eq_matrix,
            eq_rhs,
            ineq_matrix,
            ineq_rhs,
            jitter: DEFAULT_JITTER,
        })
    }

    pub fn from_model(model: &FiniteDimModel) -> Self {
        let (g, h) = model.inequality().dense();
        QuadraticProgram {
            gamma: model.gamma().clone(),
            eq_matrix: model.design_matrix().clone(),
            eq_rhs: model.equality_rhs().clone(),
            ineq_matrix: g,
            ineq_rhs: h,
            jitter: model.options().jitter,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }
}

/// The program in reduced coordinates: `min ½|t|²` s.t. `M t ≥ b`, with
/// `c = ξ_I + W t`.
#[derive(Debug, Clone)]
pub struct ReducedProgram {
    pub whitened: Whitened,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl ReducedProgram {
    pub fn dim(&self) -> usize {
        self.whitened.reduced_dim()
    }

    /// `c = ξ_I + W t`.
    pub fn recover(&self, t: &DVector<f64>) -> DVector<f64> {
        self.whitened.point(t)
    }

    /// `½ cᵀΓ⁻¹c` at `c = ξ_I + W t`.
    pub fn objective(&self, t: &DVector<f64>) -> f64 {
        0.5 * (self.whitened.offset_norm2 + t.norm_squared())
    }
}

/// Change of variables that removes `Γ⁻¹` and the equalities.
pub fn reformulate(
    gamma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    rel_jitter: f64,
) -> Result<ReducedProgram> {
    if g.ncols() != gamma.nrows() {
        return Err(CgpError::DimensionMismatch {
            expected: gamma.nrows(),
            got: g.ncols(),
        });
    }
    if h.len() != g.nrows() {
        return Err(CgpError::DimensionMismatch {
            expected: g.nrows(),
            got: h.len(),
        });
    }
    let whitened = whiten(gamma, a, y, rel_jitter)?;
    let constraints = g * &whitened.directions;
    let rhs = h - g * &whitened.mean;
    Ok(ReducedProgram {
        whitened,
        constraints,
        rhs,
    })
}

/// Solution of the reduced projection problem.
#[derive(Debug, Clone)]
pub struct ProjectionSolution {
    pub t: DVector<f64>,
    /// Active constraint indices, sorted.
    pub active_set: Vec<usize>,
    /// One multiplier per constraint row, zero off the active set.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub minimizer: DVector<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    /// Multipliers `λ ≥ 0` of the inequality rows; the first-order condition
    /// reads `Γ⁻¹μ = Aᵀν + Gᵀλ`.
    pub multipliers: DVector<f64>,
    /// Reduced coordinates `t*` of the minimizer.
    pub reduced: DVector<f64>,
    pub iterations: usize,
}

pub fn solve_mode(program: &QuadraticProgram) -> Result<QpSolution> {
    let reduced = reformulate(
        &program.gamma,
        &program.eq_matrix,
        &program.eq_rhs,
        &program.ineq_matrix,
        &program.ineq_rhs,
        program.jitter,
    )?;
    solve_reduced(&reduced)
}

pub fn solve_reduced(reduced: &ReducedProgram) -> Result<QpSolution> {
    let sol = project_origin(&reduced.constraints, &reduced.rhs)?;
    let minimizer = if sol.active_set.is_empty() && sol.t.iter().all(|&v| v == 0.0) {
        reduced.whitened.mean.clone()
    } else {
        reduced.recover(&sol.t)
    };
    Ok(QpSolution {
        objective: reduced.objective(&sol.t),
        minimizer,
        active_set: sol.active_set,
        multipliers: sol.multipliers,
        reduced: sol.t,
        iterations: sol.iterations,
    })
}

/// `argmin ½|t|²` s.t. `M t ≥ b` by the dual active-set method with
/// Givens-updated factors `Jᵀ N_A = [R; 0]`.
pub fn project_origin(m_mat: &DMatrix<f64>, b: &DVector<f64>) -> Result<ProjectionSolution> {
    let (k, p) = m_mat.shape();
    if b.len() != k {
        return Err(CgpError::DimensionMismatch {
            expected: k,
            got: b.len(),
        });
    }
    let max_iter = 50 * (p + k).max(1);
    let mut state = ActiveSet::new(p);
    let mut x = DVector::<f64>::zeros(p);
    let mut iterations = 0usize;
    let row_norms: Vec<f64> = (0..k).map(|i| m_mat.row(i).norm()).collect();

    loop {
        // Most violated constraint, lowest index on ties.
        let slack = m_mat * &x - b;
        let mut chosen: Option<(usize, f64)> = None;
        for i in 0..k {
            if state.contains(i) {
                continue;
            }
            let s = slack[i];
            if s < -IMPROVEMENT_TOL * (1.0 + b[i].abs()) && chosen.is_none_or(|(_, best)| s < best) {
                chosen = Some((i, s));
            }
        }
        let Some((cp, _)) = chosen else { break };
        let np: DVector<f64> = m_mat.row(cp).transpose();
        if row_norms[cp] == 0.0 {
            return Err(CgpError::Infeasible(format!(
                "constraint {cp} reads 0 >= {} on the interpolation subspace",
                b[cp]
            )));
        }
        let mut u_new = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(CgpError::IterationLimit(max_iter));
            }
            let s = np.dot(&x) - b[cp];
            let d = state.j.tr_mul(&np);
            let q = state.active.len();
            let z = state.j.columns(q, p - q) * d.rows(q, p - q);
            let r = state.solve_r(&d);
            let z_tol = 1e-12 * row_norms[cp];
            let has_step = z.norm() > z_tol;
            let t2 = if has_step {
                -s / z.dot(&np)
            } else {
                f64::INFINITY
            };
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (l, &rl) in r.iter().enumerate() {
                if rl > 0.0 {
                    let ratio = state.u[l] / rl;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(l);
                    }
                }
            }
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(CgpError::Infeasible(format!(
                    "constraint {cp} cannot be satisfied together with the active constraints"
                )));
            }
            for (ul, rl) in state.u.iter_mut().zip(r.iter()) {
                *ul -= t * rl;
            }
            u_new += t;
            if has_step {
                x.axpy(t, &z, 1.0);
            }
            if has_step && t2 <= t1 {
                state.add(cp, &d, u_new);
                break;
            }
            let l = drop_at.expect("partial step has a blocking constraint");
            state.drop(l);
        }
    }

    let mut multipliers = DVector::zeros(k);
    for (&i, &u) in state.active.iter().zip(&state.u) {
        multipliers[i] = u.max(0.0);
    }
    let mut active_set = state.active.clone();
    active_set.sort_unstable();
    Ok(ProjectionSolution {
        t: x,
        active_set,
        multipliers,
        iterations,
    })
}

struct ActiveSet {
    p: usize,
    j: DMatrix<f64>,
    /// Upper-triangular, leading `q × q` block in use.
    r: DMatrix<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
}

impl ActiveSet {
    fn new(p: usize) -> Self {
        ActiveSet {
            p,
            j: DMatrix::identity(p, p),
            r: DMatrix::zeros(p, p),
            active: Vec::new(),
            u: Vec::new(),
        }
    }

    fn contains(&self, i: usize) -> bool {
        self.active.contains(&i)
    }

    /// `R⁻¹ d[..q]`.
    fn solve_r(&self, d: &DVector<f64>) -> Vec<f64> {
        let q = self.active.len();
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    fn add(&mut self, index: usize, d: &DVector<f64>, u: f64) {
        let q = self.active.len();
        let mut d = d.clone();
        for jj in (q + 1..self.p).rev() {
            if d[jj] == 0.0 {
                continue;
            }
            let (c, s, h) = givens(d[jj - 1], d[jj]);
            d[jj - 1] = h;
            d[jj] = 0.0;
            rotate_columns(&mut self.j, jj - 1, jj, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.active.push(index);
        self.u.push(u);
    }

    fn drop(&mut self, l: usize) {
        let q = self.active.len();
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        // Restore triangularity: zero the subdiagonal of columns l..q-1.
        for col in l..q - 1 {
            let a = self.r[(col, col)];
            let b = self.r[(col + 1, col)];
            if b == 0.0 {
                continue;
            }
            let (c, s, h) = givens(a, b);
            self.r[(col, col)] = h;
            self.r[(col + 1, col)] = 0.0;
            for k in col + 1..q - 1 {
                let x = self.r[(col, k)];
                let y = self.r[(col + 1, k)];
                self.r[(col, k)] = c * x + s * y;
                self.r[(col + 1, k)] = -s * x + c * y;
            }
            rotate_columns(&mut self.j, col, col + 1, c, s);
        }
        self.active.remove(l);
        self.u.remove(l);
    }
}

/// `(c, s, h)` with `[c s; −s c] [a; b] = [h; 0]`.
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    (a / h, b / h, h)
}

/// `J ← J Gᵀ` for the rotation acting on coordinates `(i, k)`.
fn rotate_columns(j: &mut DMatrix<f64>, i: usize, k: usize, c: f64, s: f64) {
    for row in 0..j.nrows() {
        let x = j[(row, i)];
        let y = j[(row, k)];
        j[(row, i)] = c * x + s * y;
        j[(row, k)] = -s * x + c * y;
    }
}

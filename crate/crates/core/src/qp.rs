//! Dense convex QP solver (primal active-set) and KKT verification.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  E x = b
//!                 l <= C x <= u
//! ```
//!
//! Bounds may be infinite. Sizes in this crate stay below a few dozen
//! variables, so every iteration solves the full KKT system of the current
//! working set with a dense LU factorization.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Symmetry tolerance applied when validating the Hessian.
const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalue floor for the convexity check (debug builds only).
const CONVEXITY_FLOOR: f64 = -1e-9;
/// Ridge added to the Hessian when its Cholesky factorization fails.
/// Cholesky pivots below this fraction of the largest skip whitening.
const WHITEN_LIMIT: f64 = 1e-7;
const PHASE_ONE_ROUNDS: usize = 5;
const PHASE_ONE_DELTA: f64 = 1e-6;

pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("inequality {index}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("hessian is not convex on the equality null space (eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("problem has no variables")]
    Empty,
}

/// A dense convex quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    hessian: DMatrix<f64>,
    gradient: DVector<f64>,
    eq_matrix: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    ineq_matrix: DMatrix<f64>,
    ineq_lower: DVector<f64>,
    ineq_upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem. The Hessian is symmetrized.
    pub fn new(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Result<Self, QpError> {
        let n = gradient.len();
        if n == 0 {
            return Err(QpError::Empty);
        }
        if hessian.shape() != (n, n) {
            return Err(QpError::Dimension(format!(
                "hessian is {:?}, gradient has {n} entries",
                hessian.shape()
            )));
        }
        if hessian.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("hessian"));
        }
        if gradient.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("gradient"));
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        debug_assert!((&hessian - hessian.transpose()).amax() <= SYMMETRY_TOL);
        Ok(Self {
            hessian,
            gradient,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_lower: DVector::zeros(0),
            ineq_upper: DVector::zeros(0),
        })
    }

    /// Replaces the equality constraints `E x = b`.
    pub fn with_equalities(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self, QpError> {
        if matrix.ncols() != self.n() || matrix.nrows() != rhs.len() {
            return Err(QpError::Dimension(format!(
                "equality matrix {:?} with rhs of {} for {} variables",
                matrix.shape(),
                rhs.len(),
                self.n()
            )));
        }
        if matrix.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("equalities"));
        }
        self.eq_matrix = matrix;
        self.eq_rhs = rhs;
        Ok(self)
    }

    /// Replaces the two-sided inequalities `l <= C x <= u`. Bounds may be infinite.
    pub fn with_inequalities(
        mut self,
        matrix: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, QpError> {
        let m = matrix.nrows();
        if matrix.ncols() != self.n() || lower.len() != m || upper.len() != m {
            return Err(QpError::Dimension(format!(
                "inequality matrix {:?} with bounds of {} / {} for {} variables",
                matrix.shape(),
                lower.len(),
                upper.len(),
                self.n()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("inequality matrix"));
        }
        if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("inequality bounds"));
        }
        for i in 0..m {
            if lower[i] > upper[i] {
                return Err(QpError::InvertedBounds { index: i, lower: lower[i], upper: upper[i] });
            }
        }
        self.ineq_matrix = matrix;
        self.ineq_lower = lower;
        self.ineq_upper = upper;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.gradient.len()
    }
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }
    pub fn gradient(&self) -> &DVector<f64> {
        &self.gradient
    }
    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.eq_matrix
    }
    pub fn eq_rhs(&self) -> &DVector<f64> {
        &self.eq_rhs
    }
    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.ineq_matrix
    }
    pub fn ineq_lower(&self) -> &DVector<f64> {
        &self.ineq_lower
    }
    pub fn ineq_upper(&self) -> &DVector<f64> {
        &self.ineq_upper
    }

    /// Objective value at `x`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    /// Smallest eigenvalue of the Hessian restricted to the null space of
    /// the equality matrix.
    pub fn reduced_min_eigenvalue(&self) -> f64 {
        let n = self.n();
        let basis = null_space(&self.eq_matrix, n);
        if basis.ncols() == 0 {
            return 0.0;
        }
        let reduced = basis.transpose() * &self.hessian * &basis;
        let reduced = (&reduced + reduced.transpose()) * 0.5;
        reduced.symmetric_eigenvalues().min()
    }

    fn check_convexity(&self) -> Result<(), QpError> {
        let scale = self.hessian.amax().max(1.0);
        let min_eig = self.reduced_min_eigenvalue();
        if min_eig < CONVEXITY_FLOOR * scale {
            return Err(QpError::NotConvex(min_eig));
        }
        Ok(())
    }
}

fn null_space(matrix: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if matrix.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Right singular vectors with (numerically) zero singular values.
    let padded = if matrix.nrows() < n {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), matrix.shape()).copy_from(matrix);
        m
    } else {
        matrix.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let cols: Vec<DVector<f64>> = (0..v_t.nrows())
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Primal/dual output. Duals follow `H x + g = E' eq_duals + C' ineq_duals`;
/// a positive inequality dual marks an active lower bound, a negative one an
/// active upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Maximum of the stationarity, primal feasibility and complementary
/// slackness violations (infinity norms).
pub fn kkt_residual(problem: &QpProblem, solution: &QpSolution) -> f64 {
    let x = &solution.x;
    let stationarity = problem.hessian() * x + problem.gradient()
        - problem.eq_matrix().transpose() * &solution.eq_duals
        - problem.ineq_matrix().transpose() * &solution.ineq_duals;
    let mut res = stationarity.amax();

    let eq = problem.eq_matrix() * x - problem.eq_rhs();
    if eq.len() > 0 {
        res = res.max(eq.amax());
    }

    let cx = problem.ineq_matrix() * x;
    for i in 0..cx.len() {
        let (lo, hi) = (problem.ineq_lower()[i], problem.ineq_upper()[i]);
        res = res.max(lo - cx[i]).max(cx[i] - hi);
        let lambda = solution.ineq_duals[i];
        let comp = if lambda > 0.0 {
            if lo.is_finite() {
                lambda * (cx[i] - lo).abs()
            } else {
                lambda
            }
        } else if lambda < 0.0 {
            if hi.is_finite() {
                -lambda * (hi - cx[i]).abs()
            } else {
                -lambda
            }
        } else {
            0.0
        };
        res = res.max(comp);
    }
    res
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Primal feasibility tolerance used for warm-start acceptance and phase 1.
    pub feas_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 200, feas_tol: 1e-9 }
    }
}

/// Which side of a two-sided inequality a one-sided row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// Problem rewritten as `E x = b`, `G x >= h` with independent equality rows.
struct Standard {
    n: usize,
    hessian: DMatrix<f64>,
    gradient: DVector<f64>,
    eq: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    /// Original index of each kept equality row; `Err(i)` for an inequality
    /// with `l == u` folded into the equalities.
    eq_source: Vec<Result<usize, usize>>,
    ge: DMatrix<f64>,
    ge_rhs: DVector<f64>,
    ge_source: Vec<(usize, Side)>,
}

struct Phase {
    x: DVector<f64>,
    eq_mult: DVector<f64>,
    ge_mult: Vec<(usize, f64)>,
    status: QpStatus,
}

/// Primal active-set solver. Holds no state between solves other than its
/// settings; distinct instances may be used from different threads.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    settings: QpSettings,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_settings(settings: QpSettings) -> Self {
        Self { settings }
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// Solves `problem`, optionally starting from `warm_start`. A feasible
    /// warm start seeds both the iterate and the working set (the constraints
    /// active at it).
    pub fn solve(&mut self, problem: &QpProblem, warm_start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
        if cfg!(debug_assertions) {
            problem.check_convexity()?;
        }
        let n = problem.n();
        if let Some(w) = warm_start {
            if w.len() != n {
                return Err(QpError::Dimension(format!("warm start has {} entries, expected {n}", w.len())));
            }
        }
        // Solve in coordinates z = L^T x where H = L L^T, so the working
        // Hessian is the identity. Multipliers are unchanged by the map.
        let Some(chol) = problem.hessian.clone().cholesky() else {
            problem.check_convexity()?;
            return Ok(self.solve_standard(problem, warm_start));
        };
        let l = chol.l();
        let diag = l.diagonal();
        if diag.min() <= WHITEN_LIMIT * diag.max() {
            problem.check_convexity()?;
            return Ok(self.solve_standard(problem, warm_start));
        }
        let lt = l.transpose();
        let Some(back) = lt.clone().try_inverse() else {
            return Ok(self.solve_standard(problem, warm_start));
        };
        let white = QpProblem {
            hessian: DMatrix::identity(n, n),
            gradient: back.transpose() * &problem.gradient,
            eq_matrix: &problem.eq_matrix * &back,
            eq_rhs: problem.eq_rhs.clone(),
            ineq_matrix: &problem.ineq_matrix * &back,
            ineq_lower: problem.ineq_lower.clone(),
            ineq_upper: problem.ineq_upper.clone(),
        };
        let z_warm = warm_start.map(|w| &lt * w);
        let mut sol = self.solve_standard(&white, z_warm.as_ref());
        match (warm_start, z_warm) {
            // The iterate never left the warm start.
            (Some(w), Some(z)) if z == sol.x => sol.x = w.clone(),
            _ => sol.x = back * &sol.x,
        }
        Ok(sol)
    }

    fn solve_standard(&mut self, problem: &QpProblem, warm_start: Option<&DVector<f64>>) -> QpSolution {
        let n = problem.n();
        let mut iterations = 0;
        let std = match standardize(problem) {
            Some(s) => s,
            None => return infeasible(problem, DVector::zeros(n), 0),
        };

        // A point on the equality manifold.
        let base = match warm_start {
            Some(w) => project_onto_equalities(&std, w),
            None => project_onto_equalities(&std, &DVector::zeros(n)),
        };
        let Some(base) = base else {
            return infeasible(problem, DVector::zeros(n), 0);
        };
        if !equalities_consistent(problem, &base, self.settings.feas_tol) {
            return infeasible(problem, base, 0);
        }

        let violation = max_violation(&std, &base);
        let start = if violation <= self.settings.feas_tol {
            base
        } else {
            // The proximal term can stall short of a distant feasible set;
            // re-center with a weaker pull while the violation keeps shrinking.
            let mut delta = PHASE_ONE_DELTA;
            let (mut x, mut t, mut status, iters) = self.phase_one(&std, &base, delta);
            iterations += iters;
            let mut prev = violation;
            for _ in 0..PHASE_ONE_ROUNDS {
                if status != QpStatus::Optimal || t <= self.settings.feas_tol || t > prev * (1.0 - 1e-3) {
                    break;
                }
                prev = t;
                delta *= 1e-2;
                let (nx, nt, ns, it) = self.phase_one(&std, &x, delta);
                iterations += it;
                (x, t, status) = (nx, nt, ns);
            }
            if status == QpStatus::MaxIter {
                let mut out = infeasible(problem, x, iterations);
                out.status = QpStatus::MaxIter;
                return out;
            }
            if t > self.settings.feas_tol || !t.is_finite() {
                return infeasible(problem, x, iterations);
            }
            x
        };

        let working = initial_working_set(&std, &start, self.settings.feas_tol);
        let max_iter = self.settings.max_iter.saturating_sub(iterations).max(1);
        let phase = run_active_set(&std, start, working, max_iter, &mut iterations);
        self.assemble(problem, &std, phase, iterations)
    }

    /// Minimizes the normalized maximum violation `t` over the equality
    /// manifold. Returns the final point, `t`, the auxiliary solve status and
    /// the iteration count.
    fn phase_one(&self, std: &Standard, base: &DVector<f64>, delta: f64) -> (DVector<f64>, f64, QpStatus, usize) {
        let n = std.n;
        let m = std.ge.nrows();
        let mut hessian = DMatrix::identity(n + 1, n + 1) * delta;
        hessian[(n, n)] = delta;
        let mut gradient = DVector::zeros(n + 1);
        for i in 0..n {
            gradient[i] = -delta * base[i];
        }
        gradient[n] = 1.0;

        let mut eq = DMatrix::zeros(std.eq.nrows(), n + 1);
        eq.view_mut((0, 0), (std.eq.nrows(), n)).copy_from(&std.eq);
        let mut ge = DMatrix::zeros(m + 1, n + 1);
        let mut ge_rhs = DVector::zeros(m + 1);
        let mut t0: f64 = 0.0;
        for i in 0..m {
            let norm = std.ge.row(i).norm();
            for j in 0..n {
                ge[(i, j)] = std.ge[(i, j)] / norm;
            }
            ge[(i, n)] = 1.0;
            ge_rhs[i] = std.ge_rhs[i] / norm;
            t0 = t0.max(ge_rhs[i] - std.ge.row(i).dot(&base.transpose()) / norm);
        }
        ge[(m, n)] = 1.0;

        let aux = Standard {
            n: n + 1,
            hessian,
            gradient,
            eq,
            eq_rhs: std.eq_rhs.clone(),
            eq_source: std.eq_source.clone(),
            ge,
            ge_rhs,
            ge_source: vec![(0, Side::Lower); m + 1],
        };
        let mut start = DVector::zeros(n + 1);
        start.rows_mut(0, n).copy_from(base);
        start[n] = t0;
        let mut iters = 0;
        let phase = run_active_set(&aux, start, Vec::new(), self.settings.max_iter, &mut iters);
        let x = phase.x.rows(0, n).into_owned();
        let t = max_violation(std, &x);
        (x, t, phase.status, iters)
    }

    fn assemble(&self, problem: &QpProblem, std: &Standard, phase: Phase, iterations: usize) -> QpSolution {
        let mut eq_duals = DVector::zeros(problem.eq_rhs().len());
        let mut ineq_duals = DVector::zeros(problem.ineq_lower().len());
        for (k, src) in std.eq_source.iter().enumerate() {
            match *src {
                Ok(i) => eq_duals[i] = phase.eq_mult[k],
                Err(i) => ineq_duals[i] = phase.eq_mult[k],
            }
        }
        for &(row, mu) in &phase.ge_mult {
            let (i, side) = std.ge_source[row];
            ineq_duals[i] += match side {
                Side::Lower => mu,
                Side::Upper => -mu,
            };
        }
        QpSolution { x: phase.x, eq_duals, ineq_duals, status: phase.status, iterations }
    }
}

fn infeasible(problem: &QpProblem, x: DVector<f64>, iterations: usize) -> QpSolution {
    QpSolution {
        x,
        eq_duals: DVector::zeros(problem.eq_rhs().len()),
        ineq_duals: DVector::zeros(problem.ineq_lower().len()),
        status: QpStatus::Infeasible,
        iterations,
    }
}

fn regularized_hessian(hessian: &DMatrix<f64>) -> DMatrix<f64> {
    if hessian.clone().cholesky().is_some() {
        return hessian.clone();
    }
    let n = hessian.nrows();
    hessian + DMatrix::identity(n, n) * RIDGE
}

/// Builds the standard form. Returns `None` when a constant (all-zero) row is
/// violated.
fn standardize(problem: &QpProblem) -> Option<Standard> {
    let n = problem.n();
    let mut eq_rows: Vec<(DVector<f64>, f64, Result<usize, usize>)> = (0..problem.eq_rhs().len())
        .map(|i| (problem.eq_matrix().row(i).transpose(), problem.eq_rhs()[i], Ok(i)))
        .collect();
    let mut ge_rows: Vec<(DVector<f64>, f64, (usize, Side))> = Vec::new();
    for i in 0..problem.ineq_lower().len() {
        let row = problem.ineq_matrix().row(i).transpose();
        let (lo, hi) = (problem.ineq_lower()[i], problem.ineq_upper()[i]);
        if lo == hi {
            eq_rows.push((row, lo, Err(i)));
            continue;
        }
        if row.amax() == 0.0 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
            continue;
        }
        if lo.is_finite() {
            ge_rows.push((row.clone(), lo, (i, Side::Lower)));
        }
        if hi.is_finite() {
            ge_rows.push((-row, -hi, (i, Side::Upper)));
        }
    }

    // Keep a linearly independent subset of the equality rows.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (row, rhs, src) in eq_rows {
        let mut residual = row.clone();
        for q in &basis {
            let c = q.dot(&residual);
            residual.axpy(-c, q, 1.0);
        }
        let norm = residual.norm();
        if norm > 1e-10 * row.norm().max(1.0) {
            basis.push(residual / norm);
            kept.push((row, rhs, src));
        } else if row.amax() == 0.0 && rhs.abs() > 0.0 {
            return None;
        }
    }

    let eq = if kept.is_empty() {
        DMatrix::zeros(0, n)
    } else {
        DMatrix::from_rows(&kept.iter().map(|(r, _, _)| r.transpose()).collect::<Vec<_>>())
    };
    let ge = if ge_rows.is_empty() {
        DMatrix::zeros(0, n)
    } else {
        DMatrix::from_rows(&ge_rows.iter().map(|(r, _, _)| r.transpose()).collect::<Vec<_>>())
    };
    Some(Standard {
        n,
        hessian: regularized_hessian(problem.hessian()),
        gradient: problem.gradient().clone(),
        eq_rhs: DVector::from_iterator(kept.len(), kept.iter().map(|k| k.1)),
        eq_source: kept.iter().map(|k| k.2).collect(),
        eq,
        ge_rhs: DVector::from_iterator(ge_rows.len(), ge_rows.iter().map(|k| k.1)),
        ge_source: ge_rows.iter().map(|k| k.2).collect(),
        ge,
    })
}

/// Closest point to `x` satisfying the kept equality rows.
fn project_onto_equalities(std: &Standard, x: &DVector<f64>) -> Option<DVector<f64>> {
    if std.eq.nrows() == 0 {
        return Some(x.clone());
    }
    let gram = (&std.eq * std.eq.transpose()).cholesky()?;
    let mut p = x.clone();
    // The Gram matrix squares the conditioning; refine against the rows.
    for _ in 0..3 {
        let residual = &std.eq_rhs - &std.eq * &p;
        p += std.eq.transpose() * gram.solve(&residual);
    }
    Some(p)
}

/// Checks the dropped (dependent) equality rows as well as the kept ones.
fn equalities_consistent(problem: &QpProblem, x: &DVector<f64>, tol: f64) -> bool {
    let scale = 1.0 + problem.eq_rhs().amax().max(0.0);
    let eq_ok = problem.eq_rhs().len() == 0
        || (problem.eq_matrix() * x - problem.eq_rhs()).amax() <= tol * scale;
    let cx = problem.ineq_matrix() * x;
    let fixed_ok = (0..cx.len())
        .filter(|&i| problem.ineq_lower()[i] == problem.ineq_upper()[i])
        .all(|i| (cx[i] - problem.ineq_lower()[i]).abs() <= tol * (1.0 + problem.ineq_lower()[i].abs()));
    eq_ok && fixed_ok
}

fn max_violation(std: &Standard, x: &DVector<f64>) -> f64 {
    let mut v: f64 = 0.0;
    for i in 0..std.ge.nrows() {
        let row = std.ge.row(i);
        v = v.max((std.ge_rhs[i] - row.dot(&x.transpose())) / row.norm());
    }
    v
}

fn initial_working_set(std: &Standard, x: &DVector<f64>, tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..std.eq.nrows() {
        push_if_independent(&mut basis, std.eq.row(i).transpose());
    }
    let mut working = Vec::new();
    for i in 0..std.ge.nrows() {
        if basis.len() >= std.n {
            break;
        }
        let row = std.ge.row(i);
        let slack = (row.dot(&x.transpose()) - std.ge_rhs[i]) / row.norm();
        if slack.abs() <= tol && push_if_independent(&mut basis, row.transpose()) {
            working.push(i);
        }
    }
    working
}

fn push_if_independent(basis: &mut Vec<DVector<f64>>, row: DVector<f64>) -> bool {
    let mut residual = row.clone();
    for q in basis.iter() {
        let c = q.dot(&residual);
        residual.axpy(-c, q, 1.0);
    }
    let norm = residual.norm();
    if norm > 1e-8 * row.norm() {
        basis.push(residual / norm);
        true
    } else {
        false
    }
}

/// Core primal active-set iteration from a feasible `x` and a working set of
/// `G` rows.
fn run_active_set(
    std: &Standard,
    mut x: DVector<f64>,
    mut working: Vec<usize>,
    max_iter: usize,
    iterations: &mut usize,
) -> Phase {
    let n = std.n;
    let me = std.eq.nrows();
    let mut local = 0;
    // Set after an unblocked full step: the iterate minimizes over the
    // working set, whatever round-off says about the next step.
    let mut on_minimum = false;
    loop {
        let mw = working.len();
        let dim = n + me + mw;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&std.hessian);
        for k in 0..me {
            for j in 0..n {
                let a = std.eq[(k, j)];
                kkt[(n + k, j)] = a;
                kkt[(j, n + k)] = -a;
            }
        }
        for (k, &row) in working.iter().enumerate() {
            for j in 0..n {
                let a = std.ge[(row, j)];
                kkt[(n + me + k, j)] = a;
                kkt[(j, n + me + k)] = -a;
            }
        }
        let grad = &std.hessian * &x + &std.gradient;
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        // Constraint rows carry the current residuals so round-off drift off
        // the working set is pulled back in the same step.
        if me > 0 {
            rhs.rows_mut(n, me).copy_from(&(&std.eq_rhs - &std.eq * &x));
        }
        for (k, &row) in working.iter().enumerate() {
            rhs[n + me + k] = std.ge_rhs[row] - std.ge.row(row).dot(&x.transpose());
        }

        let lu = kkt.clone().lu();
        let Some(mut sol) = lu.solve(&rhs) else {
            log::warn!("singular KKT system with {mw} working constraints");
            return Phase {
                eq_mult: DVector::zeros(me),
                ge_mult: Vec::new(),
                x,
                status: QpStatus::MaxIter,
            };
        };
        if let Some(fix) = lu.solve(&(&rhs - &kkt * &sol)) {
            sol += fix;
        }
        let p = sol.rows(0, n).into_owned();
        let eq_mult = sol.rows(n, me).into_owned();
        let mults: Vec<f64> = (0..mw).map(|k| sol[n + me + k]).collect();

        let step_floor = 1e-12 * (1.0 + x.amax());
        if on_minimum || p.amax() <= step_floor {
            on_minimum = false;
            // Stationary on the working set: check the multiplier signs.
            let mut drop: Option<(usize, f64)> = None;
            for (k, &mu) in mults.iter().enumerate() {
                let scale = 1e-10 * (1.0 + grad.amax());
                if mu < -scale && drop.map_or(true, |(_, best)| mu < best) {
                    drop = Some((k, mu));
                }
            }
            match drop {
                None => {
                    return Phase {
                        ge_mult: working.iter().copied().zip(mults).collect(),
                        eq_mult,
                        x,
                        status: QpStatus::Optimal,
                    }
                }
                Some((k, _)) => {
                    working.remove(k);
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking: Option<usize> = None;
            for i in 0..std.ge.nrows() {
                if working.contains(&i) {
                    continue;
                }
                let row = std.ge.row(i);
                let ap = row.dot(&p.transpose());
                if ap < -1e-14 * row.norm() * p.norm() {
                    let slack = row.dot(&x.transpose()) - std.ge_rhs[i];
                    let ratio = (-slack / ap).max(0.0);
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            x.axpy(alpha, &p, 1.0);
            match blocking {
                Some(i) => working.push(i),
                None => on_minimum = true,
            }
        }

        *iterations += 1;
        local += 1;
        if local >= max_iter {
            return Phase {
                eq_mult,
                ge_mult: Vec::new(),
                x,
                status: QpStatus::MaxIter,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// Projected gradient descent over a box (oracle, independent of the
    /// active-set path).
    fn projected_gradient(h: &DMatrix<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
        let lmax = h.clone().symmetric_eigenvalues().max();
        let step = 1.0 / lmax;
        let mut x = DVector::zeros(g.len());
        for _ in 0..2_000_000 {
            let grad = h * &x + g;
            let next = (&x - grad * step).zip_zip_map(lo, hi, |v, l, u| v.clamp(l, u));
            let change = (&next - &x).amax();
            x = next;
            if change < 1e-13 {
                break;
            }
        }
        x
    }

    pub(crate) fn random_boxed(rng: &mut ChaCha8Rng, n: usize, boxed: usize) -> (QpProblem, DVector<f64>, DVector<f64>) {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        for i in 0..boxed {
            let l: f64 = rng.gen_range(-1.0..0.5);
            lo[i] = l;
            hi[i] = l + rng.gen_range(0.1..1.0);
        }
        let c = DMatrix::identity(n, n).rows(0, boxed).into_owned();
        let p = QpProblem::new(h, g)
            .unwrap()
            .with_inequalities(c, lo.rows(0, boxed).into_owned(), hi.rows(0, boxed).into_owned())
            .unwrap();
        (p, lo, hi)
    }

    #[test]
    fn unconstrained_stationary_point() {
        let p = QpProblem::new(DMatrix::identity(2, 2), vec(&[-1.0, -2.0])).unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-14 && (s.x[1] - 2.0).abs() < 1e-14);
        assert!(kkt_residual(&p, &s) <= 1e-12);
    }

    #[test]
    fn box_projection_hits_lower_bound() {
        let p = QpProblem::new(DMatrix::from_element(1, 1, 2.0), vec(&[0.0]))
            .unwrap()
            .with_inequalities(DMatrix::identity(1, 1), vec(&[1.0]), vec(&[2.0]))
            .unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!(s.ineq_duals[0] > 0.0, "lower bound should be active");
        assert!(kkt_residual(&p, &s) <= 1e-8);
    }

    #[test]
    fn random_box_matches_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (p, lo, hi) = random_boxed(&mut rng, 5, 3);
            let oracle = projected_gradient(p.hessian(), p.gradient(), &lo, &hi);
            let s = QpSolver::new().solve(&p, None).unwrap();
            assert_eq!(s.status, QpStatus::Optimal);
            assert!((&s.x - &oracle).amax() < 1e-6, "{} vs {}", s.x, oracle);
            assert!(kkt_residual(&p, &s) <= 1e-8);
        }
    }

    #[test]
    fn perturbed_solution_has_large_residual() {
        let p = QpProblem::new(DMatrix::identity(2, 2) * 3.0, vec(&[-3.0, 6.0])).unwrap();
        let mut s = QpSolver::new().solve(&p, None).unwrap();
        s.x[0] += 1e-3;
        assert!(kkt_residual(&p, &s) >= 1e-4);
    }

    #[test]
    fn equality_only_matches_kkt_system() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let g = vec(&[1.0, -2.0, 0.5]);
        let e = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let b = vec(&[1.0]);
        let p = QpProblem::new(h.clone(), g.clone()).unwrap().with_equalities(e.clone(), b.clone()).unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();

        let mut kkt = DMatrix::zeros(4, 4);
        kkt.view_mut((0, 0), (3, 3)).copy_from(&h);
        kkt.view_mut((0, 3), (3, 1)).copy_from(&e.transpose());
        kkt.view_mut((3, 0), (1, 3)).copy_from(&e);
        let rhs = vec(&[-1.0, 2.0, -0.5, 1.0]);
        let closed = kkt.lu().solve(&rhs).unwrap();
        assert!((s.x.clone() - closed.rows(0, 3)).amax() < 1e-9);
        assert!(kkt_residual(&p, &s) <= 1e-8);
    }

    #[test]
    fn square_equalities_hold_to_round_off() {
        // cond(E) ~ 2e3; the solution is E^-1 b whatever the cost.
        let e = DMatrix::from_row_slice(3, 3, &[1.0, 0.999, 0.0, 0.999, 1.0, 0.3, 0.0, 0.2, 1.0]);
        let b = vec(&[0.3, -0.7, 0.9]);
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 3.0]);
        let p = QpProblem::new(h, vec(&[1.0, -2.0, 3.0])).unwrap().with_equalities(e.clone(), b.clone()).unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        let exact = e.clone().lu().solve(&b).unwrap();
        assert!((&e * &s.x - &b).amax() < 1e-13);
        assert!((s.x - exact).amax() < 1e-11);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let p = QpProblem::new(DMatrix::identity(2, 2), vec(&[0.0, 0.0]))
            .unwrap()
            .with_equalities(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), vec(&[1.0, 2.0]))
            .unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn empty_inequality_set_is_infeasible() {
        // x >= 1 and x <= 0 written as two rows.
        let c = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let p = QpProblem::new(DMatrix::identity(1, 1), vec(&[0.0]))
            .unwrap()
            .with_inequalities(c, vec(&[1.0, f64::NEG_INFINITY]), vec(&[f64::INFINITY, 0.0]))
            .unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn infeasible_start_goes_through_phase_one() {
        // Optimum of the unconstrained part is outside a general polytope.
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let p = QpProblem::new(DMatrix::identity(2, 2), vec(&[-5.0, -5.0]))
            .unwrap()
            .with_inequalities(c, vec(&[2.0, -0.5]), vec(&[3.0, 0.5]))
            .unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] + s.x[1] - 3.0).abs() < 1e-9);
        assert!(kkt_residual(&p, &s) <= 1e-8);
    }

    #[test]
    fn warm_restart_is_bitwise_identical_and_not_slower() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (p, _, _) = random_boxed(&mut rng, 6, 4);
            let mut solver = QpSolver::new();
            let cold = solver.solve(&p, None).unwrap();
            let warm = solver.solve(&p, Some(&cold.x)).unwrap();
            assert_eq!(warm.status, QpStatus::Optimal);
            assert_eq!(cold.x.as_slice(), warm.x.as_slice());
            assert!(warm.iterations <= cold.iterations);
        }
    }

    #[test]
    fn semidefinite_hessian_gets_ridge() {
        // Zero curvature in the second coordinate, bounded by a box.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = QpProblem::new(h, vec(&[-1.0, 1.0]))
            .unwrap()
            .with_inequalities(DMatrix::identity(2, 2), vec(&[-5.0, -2.0]), vec(&[5.0, 2.0]))
            .unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-8 && (s.x[1] + 2.0).abs() < 1e-8);
        assert!(kkt_residual(&p, &s) <= 1e-8);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            QpProblem::new(DMatrix::identity(2, 2), vec(&[1.0])),
            Err(QpError::Dimension(_))
        ));
        let p = QpProblem::new(DMatrix::identity(1, 1), vec(&[1.0])).unwrap();
        assert!(matches!(
            p.with_inequalities(DMatrix::identity(1, 1), vec(&[2.0]), vec(&[1.0])),
            Err(QpError::InvertedBounds { .. })
        ));
        let nonconvex = QpProblem::new(DMatrix::from_element(1, 1, -1.0), vec(&[0.0])).unwrap();
        assert!(matches!(QpSolver::new().solve(&nonconvex, None), Err(QpError::NotConvex(_))));
    }

    #[test]
    fn max_iter_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, _, _) = random_boxed(&mut rng, 5, 5);
        let mut solver = QpSolver::with_settings(QpSettings { max_iter: 1, ..Default::default() });
        let s = solver.solve(&p, None).unwrap();
        assert_eq!(s.status, QpStatus::MaxIter);
    }

    proptest::proptest! {
        #[test]
        fn optimal_solves_satisfy_kkt(seed in 0u64..500, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let boxed = rng.gen_range(0..=n);
            let (p, _, _) = random_boxed(&mut rng, n, boxed);
            let s = QpSolver::new().solve(&p, None).unwrap();
            proptest::prop_assert_eq!(s.status, QpStatus::Optimal);
            proptest::prop_assert!(kkt_residual(&p, &s) <= 1e-8);
        }
    }
}

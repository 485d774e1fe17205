//! Iteratively reweighted least squares for the sum-of-norms fusion program
//!
//! ```text
//! minimize   sum_i sum_j ||z_i - z_j||
//! subject to a_i^T z_i = b_i
//! ```
//!
//! Each iteration solves the equality-constrained weighted least-squares
//! problem `min sum_ij w_ij ||z_i - z_j||^2` exactly and then resets the
//! weights to `w_ij = (||z_i - z_j||^2 + delta)^(-1/2)`.
//!
//! The subproblem is solved in null-space coordinates: every `z_i` is written
//! as `z_i = c_i + N_i y_i`, with `c_i` the minimum-norm point of its
//! hyperplane and `N_i` an orthonormal basis of `a_i^perp`. The constraints
//! then hold by construction and the normal equations in `y` are symmetric
//! positive definite on every connected component of the weight graph.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::geometry::orthonormal_complement_basis;
use crate::linalg::{dist_sq, dot, norm, row_space_basis, rows_to_matrix};
use crate::model::{feasibility_residual, recovery_error, Dataset, EstimateField};

/// Condition estimate above which a subproblem is rejected.
pub const MAX_CONDITION: f64 = 1e14;

/// Lower bound for an annealed smoothing parameter.
pub const DELTA_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Smoothing added to squared distances before the inverse square root.
    pub delta: f64,
    pub max_iter: usize,
    /// Stop once `||Z_{t+1} - Z_t||_F / sqrt(m)` drops below this.
    pub stop_tol: f64,
    /// Bound on the relative normal-equation residual of each subproblem.
    pub subproblem_tol: f64,
    /// Optional geometric decay of `delta` per iteration (floored at
    /// [`DELTA_FLOOR`]). `None` keeps `delta` fixed.
    pub delta_decay: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            delta: 1e-16,
            max_iter: 150,
            stop_tol: 1e-5,
            subproblem_tol: 1e-10,
            delta_decay: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(MlrError::invalid("delta must be positive"));
        }
        if self.max_iter == 0 {
            return Err(MlrError::invalid("max_iter must be at least 1"));
        }
        if [self.stop_tol, self.subproblem_tol]
            .iter()
            .any(|t| t.is_nan() || *t <= 0.0)
        {
            return Err(MlrError::invalid("tolerances must be positive"));
        }
        if let Some(r) = self.delta_decay {
            if !(r > 0.0 && r < 1.0) {
                return Err(MlrError::invalid("delta decay must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Per-run diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Number of weighted least-squares solves performed.
    pub iterations: usize,
    /// Smoothed objective `F_delta(Z_t)` after every solve.
    pub objective_history: Vec<f64>,
    /// Normalized step `||Z_t - Z_{t-1}||_F / sqrt(m)` for `t >= 1`.
    pub step_history: Vec<f64>,
    pub final_step_norm: f64,
    pub converged: bool,
    /// Largest constraint violation over all iterates.
    pub max_feasibility_residual: f64,
    /// Largest relative normal-equation residual over all subproblems.
    pub max_subproblem_residual: f64,
}

impl SolveTrace {
    /// Largest increase of the smoothed objective between consecutive
    /// iterates (non-positive when the history is monotone).
    pub fn max_objective_increase(&self) -> f64 {
        self.objective_history
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Symmetric nonnegative pair weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    m: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    /// All off-diagonal weights equal to one.
    pub fn uniform(m: usize) -> Self {
        let mut w = vec![1.0; m * m];
        for i in 0..m {
            w[i * m + i] = 0.0;
        }
        Self { m, w }
    }

    /// Validates a dense row-major `m × m` matrix.
    pub fn from_dense(m: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != m * m {
            return Err(MlrError::DimensionMismatch {
                expected: m * m,
                found: w.len(),
            });
        }
        for i in 0..m {
            if w[i * m + i] != 0.0 {
                return Err(MlrError::invalid("weight diagonal must be zero"));
            }
            for j in 0..m {
                let x = w[i * m + j];
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(MlrError::invalid("weights must be finite and nonnegative"));
                }
                if x != w[j * m + i] {
                    return Err(MlrError::invalid("weight matrix must be symmetric"));
                }
            }
        }
        Ok(Self { m, w })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.m + j]
    }

    /// Connected components of the graph with edges `w_ij > 0`, each sorted.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.m];
        let mut out = Vec::new();
        for s in 0..self.m {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                comp.push(i);
                for (j, flag) in seen.iter_mut().enumerate() {
                    if !*flag && self.get(i, j) > 0.0 {
                        *flag = true;
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// `w_ij = (||z_i - z_j||^2 + delta)^(-1/2)` off the diagonal.
pub fn update_weights(z: &EstimateField, delta: f64) -> WeightMatrix {
    let m = z.rows();
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let v = 1.0 / (dist_sq(z.row(i), z.row(j)) + delta).sqrt();
            w[i * m + j] = v;
            w[j * m + i] = v;
        }
    }
    WeightMatrix { m, w }
}

/// `F_delta(Z) = sum_{i != j} sqrt(||z_i - z_j||^2 + delta)`.
pub fn smoothed_objective(z: &EstimateField, delta: f64) -> f64 {
    let m = z.rows();
    let mut total = 0.0;
    for i in 0..m {
        let mut row = 0.0;
        for j in i + 1..m {
            row += (dist_sq(z.row(i), z.row(j)) + delta).sqrt();
        }
        total += row;
    }
    2.0 * total
}

/// Null-space data for one connected group of rows. Independent of the
/// weights, so IRLS builds it once.
struct ComponentSystem {
    rows: Vec<usize>,
    /// `d × r` orthonormal basis of the span of the group's `a_i`.
    basis: DMatrix<f64>,
    /// Minimum-norm hyperplane points in basis coordinates (length `r`).
    offsets: Vec<Vec<f64>>,
    /// `N_i` in basis coordinates, `r × (r-1)`.
    complements: Vec<DMatrix<f64>>,
    /// `N_i^T N_j`, row-major `(r-1)^2` per ordered local pair.
    cross: Vec<f64>,
    /// `N_i^T c_j`, length `r-1` per ordered local pair.
    shifts: Vec<f64>,
}

impl ComponentSystem {
    fn new(dataset: &Dataset, rows: Vec<usize>) -> Self {
        let d = dataset.dim();
        let a_mat = rows_to_matrix(rows.iter().map(|&i| dataset.row(i).a.as_slice()), d);
        let basis = row_space_basis(&a_mat);
        let r = basis.ncols();
        let s = r.saturating_sub(1);
        let n = rows.len();

        let mut offsets = Vec::<Vec<f64>>::with_capacity(n);
        let mut complements = Vec::with_capacity(n);
        for &i in &rows {
            let a = &dataset.row(i).a;
            let alpha: Vec<f64> = (0..r)
                .map(|c| (0..d).map(|t| basis[(t, c)] * a[t]).sum())
                .collect();
            let aa = dot(&alpha, &alpha);
            offsets.push(alpha.iter().map(|x| dataset.row(i).b * x / aa).collect());
            complements
                .push(orthonormal_complement_basis(&alpha).expect("nonzero projected measurement"));
        }

        let mut cross = vec![0.0; n * n * s * s];
        let mut shifts = vec![0.0; n * n * s];
        if s > 0 {
            for li in 0..n {
                let ni_t = complements[li].transpose();
                for lj in 0..n {
                    if li == lj {
                        continue;
                    }
                    let g = &ni_t * &complements[lj];
                    let base = (li * n + lj) * s * s;
                    for p in 0..s {
                        for q in 0..s {
                            cross[base + p * s + q] = g[(p, q)];
                        }
                    }
                    let h = &ni_t * DVector::from_column_slice(&offsets[lj]);
                    shifts[(li * n + lj) * s..(li * n + lj + 1) * s].copy_from_slice(h.as_slice());
                }
            }
        }
        Self {
            rows,
            basis,
            offsets,
            complements,
            cross,
            shifts,
        }
    }

    fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Solves the normal equations for this component and writes the
    /// estimates into `z`. Returns the relative residual.
    fn solve(&self, w: &WeightMatrix, z: &mut EstimateField) -> Result<f64> {
        let r = self.rank();
        let s = r.saturating_sub(1);
        let n = self.rows.len();
        let dim = n * s;

        let mut y = vec![0.0; dim];
        let mut rel_residual = 0.0;
        if dim > 0 {
            let mut mat = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            let mut diag = vec![0.0; n];
            for li in 0..n {
                let gi = self.rows[li];
                for lj in 0..n {
                    if li == lj {
                        continue;
                    }
                    let wij = w.get(gi, self.rows[lj]);
                    if wij == 0.0 {
                        continue;
                    }
                    diag[li] += wij;
                    let base = (li * n + lj) * s * s;
                    for p in 0..s {
                        for q in 0..s {
                            mat[(li * s + p, lj * s + q)] = -wij * self.cross[base + p * s + q];
                        }
                    }
                    let hb = (li * n + lj) * s;
                    for p in 0..s {
                        rhs[li * s + p] += wij * self.shifts[hb + p];
                    }
                }
                for p in 0..s {
                    mat[(li * s + p, li * s + p)] = diag[li];
                }
            }
            if diag.contains(&0.0) {
                // isolated row inside a multi-row group cannot happen when
                // groups are connected components
                return Err(MlrError::Numerical(
                    "isolated row in weight component".into(),
                ));
            }

            // symmetric diagonal scaling to unit diagonal
            let scale: Vec<f64> = (0..dim).map(|t| 1.0 / diag[t / s].sqrt()).collect();
            let mut scaled = mat.clone();
            for c in 0..dim {
                for rr in 0..dim {
                    scaled[(rr, c)] *= scale[rr] * scale[c];
                }
            }
            let chol = Cholesky::new(scaled).ok_or_else(|| {
                MlrError::Numerical("weighted least-squares system is not positive definite".into())
            })?;
            let l = chol.l_dirty();
            let (mut lmin, mut lmax) = (f64::INFINITY, 0.0_f64);
            for t in 0..dim {
                lmin = lmin.min(l[(t, t)].abs());
                lmax = lmax.max(l[(t, t)].abs());
            }
            let cond = (lmax / lmin).powi(2);
            if cond.is_nan() || cond > MAX_CONDITION {
                return Err(MlrError::Numerical(format!(
                    "weighted least-squares system is ill-conditioned (estimate {cond:.3e})"
                )));
            }

            let srhs = DVector::from_iterator(dim, (0..dim).map(|t| rhs[t] * scale[t]));
            let mut u = chol.solve(&srhs);
            // two rounds of iterative refinement in the unscaled system
            for _ in 0..2 {
                let yv = DVector::from_iterator(dim, (0..dim).map(|t| u[t] * scale[t]));
                let res = &rhs - &mat * &yv;
                let sres = DVector::from_iterator(dim, (0..dim).map(|t| res[t] * scale[t]));
                u += chol.solve(&sres);
            }
            for t in 0..dim {
                y[t] = u[t] * scale[t];
            }
            let yv = DVector::from_column_slice(&y);
            let res = &rhs - &mat * &yv;
            let denom = mat.abs().max() * yv.amax() + rhs.amax();
            rel_residual = if denom > 0.0 { res.amax() / denom } else { 0.0 };
        }

        let d = z.dim();
        for (li, &gi) in self.rows.iter().enumerate() {
            let mut coord = self.offsets[li].clone();
            if s > 0 {
                let ys = &y[li * s..(li + 1) * s];
                let nmat = &self.complements[li];
                for (p, cp) in coord.iter_mut().enumerate() {
                    *cp += (0..s).map(|q| nmat[(p, q)] * ys[q]).sum::<f64>();
                }
            }
            let out = z.row_mut(gi);
            for (t, o) in out.iter_mut().enumerate().take(d) {
                *o = (0..r).map(|c| self.basis[(t, c)] * coord[c]).sum();
            }
        }
        Ok(rel_residual)
    }
}

/// Reusable factorization-independent data for repeated subproblem solves on
/// one dataset.
pub struct SubproblemSolver {
    m: usize,
    d: usize,
    components: Vec<ComponentSystem>,
    unique: bool,
}

/// Output of one weighted least-squares solve.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub z: EstimateField,
    /// `false` when the minimizer is not unique and the minimum-norm one was
    /// returned.
    pub unique: bool,
    pub connected: bool,
    /// Relative residual of the normal equations.
    pub residual: f64,
}

impl SubproblemSolver {
    /// Prepares for weights whose positive entries connect the given groups.
    fn with_components(dataset: &Dataset, groups: Vec<Vec<usize>>) -> Self {
        let d = dataset.dim();
        let components: Vec<ComponentSystem> = groups
            .into_iter()
            .map(|g| ComponentSystem::new(dataset, g))
            .collect();
        let unique = components.iter().all(|c| c.rank() == d);
        Self {
            m: dataset.len(),
            d,
            components,
            unique,
        }
    }

    /// Prepares for strictly positive off-diagonal weights (a single
    /// connected component), as produced by [`update_weights`].
    pub fn new(dataset: &Dataset) -> Self {
        Self::with_components(dataset, vec![(0..dataset.len()).collect()])
    }

    pub fn solve(&self, w: &WeightMatrix) -> Result<SubproblemSolution> {
        if w.size() != self.m {
            return Err(MlrError::DimensionMismatch {
                expected: self.m,
                found: w.size(),
            });
        }
        let mut z = EstimateField::zeros(self.m, self.d);
        let mut residual: f64 = 0.0;
        for c in &self.components {
            residual = residual.max(c.solve(w, &mut z)?);
        }
        Ok(SubproblemSolution {
            z,
            unique: self.unique,
            connected: self.components.len() <= 1,
            residual,
        })
    }
}

/// Exact minimizer of `sum_ij w_ij ||z_i - z_j||^2` subject to
/// `a_i^T z_i = b_i`, with diagnostics.
///
/// When the weight graph is disconnected, or the measurement vectors of a
/// component do not span `R^d`, the minimizer is not unique; the
/// minimum-norm minimizer is returned and `unique` is `false`.
pub fn weighted_ls_step_detailed(
    dataset: &Dataset,
    w: &WeightMatrix,
) -> Result<SubproblemSolution> {
    if w.size() != dataset.len() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.len(),
            found: w.size(),
        });
    }
    let groups = w.components();
    if groups.len() > 1 {
        log::warn!(
            "weight graph has {} components; returning the minimum-norm subproblem solution",
            groups.len()
        );
    }
    SubproblemSolver::with_components(dataset, groups).solve(w)
}

/// Exact minimizer of the weighted least-squares subproblem.
pub fn weighted_ls_step(dataset: &Dataset, w: &WeightMatrix) -> Result<EstimateField> {
    weighted_ls_step_detailed(dataset, w).map(|s| s.z)
}

/// Runs IRLS from uniform weights until the normalized step falls below
/// `stop_tol` or `max_iter` solves have been made.
pub fn irls_solve(dataset: &Dataset, opts: &SolverOptions) -> Result<(EstimateField, SolveTrace)> {
    opts.validate()?;
    let m = dataset.len();
    if m == 0 {
        return Err(MlrError::invalid("dataset has no rows"));
    }
    let solver = SubproblemSolver::new(dataset);
    let mut weights = WeightMatrix::uniform(m);
    let mut delta = opts.delta;
    let mut trace = SolveTrace {
        iterations: 0,
        objective_history: Vec::new(),
        step_history: Vec::new(),
        final_step_norm: f64::INFINITY,
        converged: false,
        max_feasibility_residual: 0.0,
        max_subproblem_residual: 0.0,
    };
    let mut current: Option<EstimateField> = None;

    for _ in 0..opts.max_iter {
        let sol = solver.solve(&weights)?;
        if sol.residual > opts.subproblem_tol {
            return Err(MlrError::Numerical(format!(
                "subproblem residual {:.3e} exceeds tolerance {:.3e}",
                sol.residual, opts.subproblem_tol
            )));
        }
        let z = sol.z;
        trace.iterations += 1;
        trace.max_subproblem_residual = trace.max_subproblem_residual.max(sol.residual);
        trace.max_feasibility_residual = trace
            .max_feasibility_residual
            .max(feasibility_residual(&z, dataset)?);
        trace.objective_history.push(smoothed_objective(&z, delta));

        if let Some(prev) = &current {
            let step = recovery_error(&z, prev)?;
            trace.step_history.push(step);
            trace.final_step_norm = step;
            if step < opts.stop_tol {
                trace.converged = true;
                current = Some(z);
                break;
            }
        }
        weights = update_weights(&z, delta);
        current = Some(z);
        if let Some(r) = opts.delta_decay {
            delta = (delta * r).max(DELTA_FLOOR);
        }
    }

    let z = current.expect("max_iter >= 1");
    if !trace.converged {
        log::debug!(
            "IRLS stopped after {} iterations with step {:.3e}",
            trace.iterations,
            trace.final_step_norm
        );
    }
    Ok((z, trace))
}

/// Largest row norm of a field, used for scale-aware comparisons.
pub fn max_row_norm(z: &EstimateField) -> f64 {
    z.iter_rows().map(norm).fold(0.0, f64::max)
}

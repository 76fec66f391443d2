//! Dense linear-algebra helpers shared by the cone, CQ and solver layers:
//! scale-invariant rank decisions, null spaces, nonnegative least squares
//! and a thin wrapper around a simplex LP solver.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold for rank decisions: `σ > RANK_RTOL · σ_max`.
pub const RANK_RTOL: f64 = 1e-8;

fn padded_svd(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (r, c) = a.shape();
    let rows = r.max(c);
    let mut padded = DMatrix::zeros(rows, c);
    padded.view_mut((0, 0), (r, c)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    (svd.singular_values, vt)
}

/// Singular values of `a` (unordered, length `min(rows, cols)` after padding to `cols`).
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Numerical rank with threshold `σ > RANK_RTOL · σ_max`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    let sv = singular_values(a);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax <= f64::MIN_POSITIVE {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

/// Orthonormal basis (as columns) of the null space of `a`, which has `ncols` columns.
pub fn null_space(a: &DMatrix<f64>, ncols: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (sv, vt) = padded_svd(a);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..ncols)
        .filter(|&i| smax <= f64::MIN_POSITIVE || sv[i] <= RANK_RTOL * smax)
        .collect();
    let mut basis = DMatrix::zeros(ncols, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        basis.set_column(j, &vt.row(i).transpose());
    }
    basis
}

/// Orthonormal basis (as columns) of the column space of `a`.
pub fn range_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > f64::MIN_POSITIVE && svd.singular_values[i] > RANK_RTOL * smax)
        .collect();
    let mut basis = DMatrix::zeros(r, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        basis.set_column(j, &u.column(i));
    }
    basis
}

/// Moore-Penrose pseudo-inverse with the crate-wide rank threshold.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (RANK_RTOL * smax).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(c, r))
}

/// Minimum-norm least-squares solution of `a x ≈ b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    pinv(a) * b
}

/// Stack two matrices with equal column counts vertically.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let c = top.ncols().max(bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), c);
    if top.nrows() > 0 {
        out.view_mut((0, 0), top.shape()).copy_from(top);
    }
    if bottom.nrows() > 0 {
        out.view_mut((top.nrows(), 0), bottom.shape())
            .copy_from(bottom);
    }
    out
}

/// Stack two matrices with equal row counts horizontally.
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    let r = left.nrows().max(right.nrows());
    let mut out = DMatrix::zeros(r, left.ncols() + right.ncols());
    if left.ncols() > 0 {
        out.view_mut((0, 0), left.shape()).copy_from(left);
    }
    if right.ncols() > 0 {
        out.view_mut((0, left.ncols()), right.shape())
            .copy_from(right);
    }
    out
}

/// Select rows of `a` by index.
pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), a.ncols());
    for (i, &r) in rows.iter().enumerate() {
        out.set_row(i, &a.row(r));
    }
    out
}

/// Lawson-Hanson nonnegative least squares: `min ‖a x − b‖` s.t. `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let anorm = a.norm().max(1.0);
    let tol = 10.0 * f64::EPSILON * anorm * (a.nrows().max(n) as f64);
    let mut passive = vec![false; n];
    let mut w = a.transpose() * (b - a * &x);
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap_or(std::cmp::Ordering::Equal));
        let t = match candidate {
            Some(t) if w[t] > tol => t,
            _ => break,
        };
        passive[t] = true;
        for _ in 0..(3 * n + 10) {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let mut ap = DMatrix::zeros(a.nrows(), idx.len());
            for (k, &j) in idx.iter().enumerate() {
                ap.set_column(k, &a.column(j));
            }
            let sp = lstsq(&ap, b);
            if sp.iter().all(|&s| s > tol) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = sp[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if sp[k] <= tol {
                    let denom = x[j] - sp[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sp[k] - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        w = a.transpose() * (b - a * &x);
    }
    x
}

/// Solution of `min ‖ci λ_I + ce λ_E − b‖` over `λ_I ≥ 0`, `λ_E` free.
#[derive(Debug, Clone)]
pub struct SignedLsq {
    pub lambda_i: DVector<f64>,
    pub lambda_e: DVector<f64>,
    pub residual: f64,
}

/// Nonnegative least squares with an additional block of free variables.
///
/// The free block is eliminated by projecting onto the orthogonal complement
/// of `range(ce)`; the nonnegative block is then an ordinary NNLS problem.
pub fn nnls_with_free(ci: &DMatrix<f64>, ce: &DMatrix<f64>, b: &DVector<f64>) -> SignedLsq {
    let rows = b.len();
    let q = range_basis(ce);
    let proj = DMatrix::identity(rows, rows) - &q * q.transpose();
    let lambda_i = if ci.ncols() > 0 {
        nnls(&(&proj * ci), &(&proj * b))
    } else {
        DVector::zeros(0)
    };
    let rhs = if ci.ncols() > 0 {
        b - ci * &lambda_i
    } else {
        b.clone()
    };
    let lambda_e = if ce.ncols() > 0 {
        lstsq(ce, &rhs)
    } else {
        DVector::zeros(0)
    };
    let mut fit = DVector::zeros(rows);
    if ci.ncols() > 0 {
        fit += ci * &lambda_i;
    }
    if ce.ncols() > 0 {
        fit += ce * &lambda_e;
    }
    let residual = (fit - b).norm();
    SignedLsq {
        lambda_i,
        lambda_e,
        residual,
    }
}

/// Comparison sense of an LP row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// A small dense linear program `min cᵀx` s.t. rows and variable bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<(Vec<f64>, Sense, f64)>,
}

/// Outcome of an LP solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(nvars: usize) -> Self {
        Self {
            objective: vec![0.0; nvars],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); nvars],
            rows: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.rows.push((coeffs, sense, rhs));
    }

    /// Minimize. Coefficients with magnitude below 1e-14 are dropped.
    pub fn solve(&self) -> crate::Result<LpOutcome> {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for (coeffs, sense, rhs) in &self.rows {
            let terms: Vec<_> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| c.abs() > 1e-14)
                .map(|(j, &c)| (vars[j], c))
                .collect();
            if terms.is_empty() {
                let ok = match sense {
                    Sense::Le => 0.0 <= *rhs + 1e-12,
                    Sense::Ge => 0.0 >= *rhs - 1e-12,
                    Sense::Eq => rhs.abs() <= 1e-12,
                };
                if !ok {
                    return Ok(LpOutcome::Infeasible);
                }
                continue;
            }
            let op = match sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Eq => ComparisonOp::Eq,
                Sense::Ge => ComparisonOp::Ge,
            };
            problem.add_constraint(terms.as_slice(), op, *rhs);
        }
        match problem.solve() {
            Ok(outcome) => match outcome.into_solution() {
                Ok(sol) => {
                    let x = vars.iter().map(|&v| sol.var_value(v)).collect();
                    Ok(LpOutcome::Optimal {
                        x,
                        objective: sol.objective(),
                    })
                }
                Err(_) => Err(crate::Error::Lp("interrupted".into())),
            },
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
            Err(e) => Err(crate::Error::Lp(e.to_string())),
        }
    }
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rank_and_null_space() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(rank(&a), 1);
        let z = null_space(&a, 3);
        assert_eq!(z.ncols(), 2);
        assert!((&a * &z).norm() < 1e-12);
        assert_eq!(rank(&DMatrix::<f64>::zeros(0, 3)), 0);
        assert_eq!(null_space(&DMatrix::zeros(0, 2), 2).ncols(), 2);
    }

    #[test]
    fn nnls_clamps_negative_direction() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let x = nnls(&a, &b);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn nnls_with_free_block() {
        // b = 2 e1 - 3 e2 with e1 nonnegative, e2 free
        let ci = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let ce = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -3.0]);
        let s = nnls_with_free(&ci, &ce, &b);
        assert_relative_eq!(s.lambda_i[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.lambda_e[0], -3.0, epsilon = 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn lp_small() {
        // min -x - y s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0  -> (8/5, 6/5)
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.bounds = vec![(0.0, f64::INFINITY); 2];
        lp.add_row(vec![1.0, 2.0], Sense::Le, 4.0);
        lp.add_row(vec![3.0, 1.0], Sense::Le, 6.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, objective } => {
                assert_relative_eq!(x[0], 1.6, epsilon = 1e-9);
                assert_relative_eq!(x[1], 1.2, epsilon = 1e-9);
                assert_relative_eq!(objective, -2.8, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
        let mut infeasible = LinearProgram::new(1);
        infeasible.add_row(vec![1.0], Sense::Le, -1.0);
        infeasible.add_row(vec![1.0], Sense::Ge, 1.0);
        assert_eq!(infeasible.solve().unwrap(), LpOutcome::Infeasible);
    }
}

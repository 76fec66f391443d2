//! Dense convex QP with a box trust region, solved by a primal active-set method.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, LinearProgram, LpOutcome, Sense};
use crate::{Error, Result};

/// `min ½vᵀHv + gᵀv` s.t. `A_I v ≤ b_I`, `A_E v = b_E`, `‖v‖_∞ ≤ Δ`.
#[derive(Debug, Clone)]
pub struct LocalQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_i: DMatrix<f64>,
    pub b_i: DVector<f64>,
    pub a_e: DMatrix<f64>,
    pub b_e: DVector<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub v: DVector<f64>,
    /// Multipliers of `A_I v ≤ b_I` (nonnegative).
    pub lambda_i: DVector<f64>,
    pub lambda_e: DVector<f64>,
    pub iterations: usize,
}

const MAX_ACTIVE_SET_ITER: usize = 500;

impl LocalQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// All inequality rows including the box, as `(A, b)`.
    fn stacked_ineq(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let eye = DMatrix::identity(n, n);
        let a = linalg::vstack(&linalg::vstack(&self.a_i, &eye), &(-&eye));
        let mut b = Vec::with_capacity(a.nrows());
        b.extend(self.b_i.iter().copied());
        b.extend(std::iter::repeat_n(self.delta, 2 * n));
        (a, DVector::from_vec(b))
    }

    /// A feasible point, or `QpInfeasible`.
    fn feasible_start(&self) -> Result<DVector<f64>> {
        let n = self.dim();
        let mut lp = LinearProgram::new(n);
        lp.bounds = vec![(-self.delta, self.delta); n];
        for r in 0..self.a_i.nrows() {
            lp.add_row(
                self.a_i.row(r).iter().copied().collect(),
                Sense::Le,
                self.b_i[r],
            );
        }
        for r in 0..self.a_e.nrows() {
            lp.add_row(
                self.a_e.row(r).iter().copied().collect(),
                Sense::Eq,
                self.b_e[r],
            );
        }
        match lp.solve()? {
            LpOutcome::Optimal { x, .. } => Ok(DVector::from_vec(x)),
            _ => Err(Error::QpInfeasible),
        }
    }

    /// Same QP with right-hand sides relaxed to the ℓ1-closest linearly feasible point.
    pub fn elastic(&self) -> Result<Self> {
        let n = self.dim();
        let (mi, me) = (self.a_i.nrows(), self.a_e.nrows());
        // variables: v (n), s_I (mi) ≥ 0, s⁺_E, s⁻_E (me) ≥ 0
        let nv = n + mi + 2 * me;
        let mut lp = LinearProgram::new(nv);
        for j in 0..n {
            lp.bounds[j] = (-self.delta, self.delta);
        }
        for j in n..nv {
            lp.bounds[j] = (0.0, f64::INFINITY);
            lp.objective[j] = 1.0;
        }
        for r in 0..mi {
            let mut row = vec![0.0; nv];
            row[..n].copy_from_slice(self.a_i.row(r).transpose().as_slice());
            row[n + r] = -1.0;
            lp.add_row(row, Sense::Le, self.b_i[r]);
        }
        for r in 0..me {
            let mut row = vec![0.0; nv];
            row[..n].copy_from_slice(self.a_e.row(r).transpose().as_slice());
            row[n + mi + r] = -1.0;
            row[n + mi + me + r] = 1.0;
            lp.add_row(row, Sense::Eq, self.b_e[r]);
        }
        let x = match lp.solve()? {
            LpOutcome::Optimal { x, .. } => DVector::from_vec(x),
            _ => return Err(Error::QpInfeasible),
        };
        let v = x.rows(0, n).into_owned();
        let mut relaxed = self.clone();
        let ai_v = &self.a_i * &v;
        for r in 0..mi {
            relaxed.b_i[r] = self.b_i[r].max(ai_v[r]);
        }
        relaxed.b_e = &self.a_e * &v;
        Ok(relaxed)
    }

    /// Primal active-set iteration from an LP-feasible start.
    pub fn solve(&self) -> Result<QpSolution> {
        let n = self.dim();
        let (a, b) = self.stacked_ineq();
        let mi = self.a_i.nrows();
        let mut v = self.feasible_start()?;
        let scale = 1.0 + b.amax();
        let mut work: Vec<usize> = Vec::new();
        for r in 0..a.nrows() {
            if (a.row(r) * &v)[0] >= b[r] - 1e-10 * scale {
                let cand = linalg::vstack(
                    &self.a_e,
                    &linalg::select_rows(&a, &[work.clone(), vec![r]].concat()),
                );
                if linalg::rank(&cand) == cand.nrows() {
                    work.push(r);
                }
            }
        }
        for it in 0..MAX_ACTIVE_SET_ITER {
            let aw = linalg::vstack(&self.a_e, &linalg::select_rows(&a, &work));
            let z = linalg::null_space(&aw, n);
            let grad = &self.h * &v + &self.g;
            let d = if z.ncols() == 0 {
                DVector::zeros(n)
            } else {
                let hz = z.transpose() * &self.h * &z;
                let chol = hz.clone().cholesky().ok_or_else(|| {
                    Error::Breakdown("reduced Hessian of the QP is not positive definite".into())
                })?;
                -(&z * chol.solve(&(z.transpose() * &grad)))
            };
            if d.amax() <= 1e-13 * (1.0 + v.amax()) {
                let lam = if aw.nrows() > 0 {
                    linalg::lstsq(&aw.transpose(), &(-&grad))
                } else {
                    DVector::zeros(0)
                };
                let me = self.a_e.nrows();
                let thr = -1e-10 * (1.0 + grad.amax());
                let worst = (0..work.len())
                    .filter(|&j| lam[me + j] < thr)
                    .min_by(|&x, &y| lam[me + x].total_cmp(&lam[me + y]));
                match worst {
                    Some(j) => {
                        work.remove(j);
                    }
                    None => {
                        let mut lambda_i = DVector::zeros(mi);
                        for (j, &r) in work.iter().enumerate() {
                            if r < mi {
                                lambda_i[r] = lam[me + j].max(0.0);
                            }
                        }
                        let lambda_e = lam.rows(0, me).into_owned();
                        return Ok(QpSolution {
                            v,
                            lambda_i,
                            lambda_e,
                            iterations: it,
                        });
                    }
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for r in 0..a.nrows() {
                if work.contains(&r) {
                    continue;
                }
                let ad = (a.row(r) * &d)[0];
                if ad > 1e-14 {
                    let slack = (b[r] - (a.row(r) * &v)[0]).max(0.0);
                    let step = slack / ad;
                    if step < alpha {
                        alpha = step;
                        blocking = Some(r);
                    }
                }
            }
            v += &d * alpha;
            if let Some(r) = blocking {
                work.push(r);
            }
        }
        Err(Error::Breakdown(
            "active-set iteration limit reached".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn qp(
        a_i: DMatrix<f64>,
        b_i: DVector<f64>,
        a_e: DMatrix<f64>,
        b_e: DVector<f64>,
        g: DVector<f64>,
    ) -> LocalQp {
        let n = g.len();
        LocalQp {
            h: DMatrix::identity(n, n),
            g,
            a_i,
            b_i,
            a_e,
            b_e,
            delta: 10.0,
        }
    }

    #[test]
    fn unconstrained_is_negative_gradient() {
        let p = qp(
            DMatrix::zeros(0, 2),
            v(&[]),
            DMatrix::zeros(0, 2),
            v(&[]),
            v(&[0.5, -1.5]),
        );
        let s = p.solve().unwrap();
        assert!((s.v - v(&[-0.5, 1.5])).norm() < 1e-12);
    }

    #[test]
    fn single_inequality_projects_gradient_step() {
        // aᵀv ≤ 0 with a = (1, 1), grad = (−1, −2): projection of (1, 2) onto {v₁ + v₂ ≤ 0}
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = qp(a, v(&[0.0]), DMatrix::zeros(0, 2), v(&[]), v(&[-1.0, -2.0]));
        let s = p.solve().unwrap();
        assert!((&s.v - v(&[-0.5, 0.5])).norm() < 1e-10);
        assert!((s.lambda_i[0] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn equality_only_matches_kkt_system() {
        let a_e = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
        let g = v(&[1.0, 0.0, -2.0]);
        let p = qp(
            DMatrix::zeros(0, 3),
            v(&[]),
            a_e.clone(),
            v(&[1.0]),
            g.clone(),
        );
        let s = p.solve().unwrap();
        let mut kkt = DMatrix::zeros(4, 4);
        kkt.view_mut((0, 0), (3, 3)).fill_with_identity();
        kkt.view_mut((0, 3), (3, 1)).copy_from(&a_e.transpose());
        kkt.view_mut((3, 0), (1, 3)).copy_from(&a_e);
        let rhs = v(&[-1.0, 0.0, 2.0, 1.0]);
        let sol = kkt.lu().solve(&rhs).unwrap();
        assert!((s.v - sol.rows(0, 3)).norm() < 1e-10);
        assert!((s.lambda_e[0] - sol[3]).abs() < 1e-10);
    }

    #[test]
    fn infeasible_and_elastic() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let p = LocalQp {
            h: DMatrix::identity(1, 1),
            g: v(&[0.0]),
            a_i: a,
            b_i: v(&[-1.0, -1.0]),
            a_e: DMatrix::zeros(0, 1),
            b_e: v(&[]),
            delta: 5.0,
        };
        assert!(matches!(p.solve(), Err(Error::QpInfeasible)));
        let relaxed = p.elastic().unwrap();
        assert!(relaxed.solve().is_ok());
    }

    #[test]
    fn box_bounds_the_step() {
        let mut p = qp(
            DMatrix::zeros(0, 2),
            v(&[]),
            DMatrix::zeros(0, 2),
            v(&[]),
            v(&[-100.0, 0.0]),
        );
        p.delta = 1.0;
        let s = p.solve().unwrap();
        assert!((s.v - v(&[1.0, 0.0])).norm() < 1e-12);
    }
}

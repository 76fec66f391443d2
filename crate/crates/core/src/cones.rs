//! Polyhedral cones `{v : A_I v ≤ 0, A_E v = 0}` in tangent-space coordinates.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, LinearProgram, LpOutcome, Sense};
use crate::{Error, Result};

/// Largest dimension for which generators are computed.
pub const MAX_RAY_DIM: usize = 12;

/// Default polar tolerance `1e-8 · (1 + ‖μ‖)`.
pub fn tol_polar(mu: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + mu.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralCone {
    pub dim: usize,
    pub a_i: DMatrix<f64>,
    pub a_e: DMatrix<f64>,
}

/// Representation `μ ≈ A_Iᵀλ_I + A_Eᵀλ_E` with `λ_I ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCertificate {
    pub lambda_i: DVector<f64>,
    pub lambda_e: DVector<f64>,
    pub residual: f64,
}

/// `cone = cone(rays) + span(lineality)`.
#[derive(Debug, Clone)]
pub struct ConeGenerators {
    pub rays: Vec<DVector<f64>>,
    pub lineality: DMatrix<f64>,
}

impl PolyhedralCone {
    pub fn new(a_i: DMatrix<f64>, a_e: DMatrix<f64>) -> Result<Self> {
        let dim = a_i.ncols().max(a_e.ncols());
        if a_i.nrows() > 0 && a_i.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a_i.ncols(),
            });
        }
        if a_e.nrows() > 0 && a_e.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a_e.ncols(),
            });
        }
        Ok(Self {
            dim,
            a_i: if a_i.nrows() == 0 {
                DMatrix::zeros(0, dim)
            } else {
                a_i
            },
            a_e: if a_e.nrows() == 0 {
                DMatrix::zeros(0, dim)
            } else {
                a_e
            },
        })
    }

    /// Cone with explicit dimension (needed when both row blocks are empty).
    pub fn with_dim(dim: usize, a_i: DMatrix<f64>, a_e: DMatrix<f64>) -> Result<Self> {
        let a_i = if a_i.nrows() == 0 {
            DMatrix::zeros(0, dim)
        } else {
            a_i
        };
        let a_e = if a_e.nrows() == 0 {
            DMatrix::zeros(0, dim)
        } else {
            a_e
        };
        if a_i.ncols() != dim || a_e.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a_i.ncols().max(a_e.ncols()),
            });
        }
        Ok(Self { dim, a_i, a_e })
    }

    pub fn whole(dim: usize) -> Self {
        Self {
            dim,
            a_i: DMatrix::zeros(0, dim),
            a_e: DMatrix::zeros(0, dim),
        }
    }

    pub fn n_ineq(&self) -> usize {
        self.a_i.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.a_e.nrows()
    }

    pub fn is_subspace(&self) -> bool {
        self.a_i.nrows() == 0
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_len(v.len())?;
        let scale = tol * (1.0 + v.norm());
        let ineq = (&self.a_i * v).iter().all(|&x| x <= scale);
        let eq = (&self.a_e * v).iter().all(|&x| x.abs() <= scale);
        Ok(ineq && eq)
    }

    /// Decide `μ ∈ cone°` by nonnegative least squares.
    pub fn polar_contains(&self, mu: &DVector<f64>, tol: f64) -> Result<(bool, PolarCertificate)> {
        self.check_len(mu.len())?;
        let s = linalg::nnls_with_free(&self.a_i.transpose(), &self.a_e.transpose(), mu);
        let cert = PolarCertificate {
            lambda_i: s.lambda_i,
            lambda_e: s.lambda_e,
            residual: s.residual,
        };
        Ok((cert.residual <= tol, cert))
    }

    /// Move the inequality rows listed in `active` into the equality block.
    pub fn face(&self, active: &[usize]) -> Result<Self> {
        let l = self.a_i.nrows();
        if let Some(&bad) = active.iter().find(|&&j| j >= l) {
            return Err(Error::IndexOutOfRange(bad, l));
        }
        let keep: Vec<usize> = (0..l).filter(|j| !active.contains(j)).collect();
        let mut moved: Vec<usize> = active.to_vec();
        moved.sort_unstable();
        moved.dedup();
        Ok(Self {
            dim: self.dim,
            a_i: linalg::select_rows(&self.a_i, &keep),
            a_e: linalg::vstack(&self.a_e, &linalg::select_rows(&self.a_i, &moved)),
        })
    }

    /// Append an equality row.
    pub fn with_equality(&self, row: &DVector<f64>) -> Result<Self> {
        self.check_len(row.len())?;
        let r = DMatrix::from_row_slice(1, self.dim, row.as_slice());
        Ok(Self {
            dim: self.dim,
            a_i: self.a_i.clone(),
            a_e: linalg::vstack(&self.a_e, &r),
        })
    }

    /// Cone `{u : v = M u ∈ self}` for a linear map `M` (dim × m).
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: m.nrows(),
            });
        }
        Self::with_dim(m.ncols(), &self.a_i * m, &self.a_e * m)
    }

    /// The same cone in coordinates `w = J v`: rows become `A J⁻¹`.
    pub fn transport(&self, j: &DMatrix<f64>) -> Result<Self> {
        let jinv = j
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular transport Jacobian".into()))?;
        self.preimage(&jinv)
    }

    /// Inequality rows that vanish on the whole cone, detected by LP.
    pub fn implicit_equalities(&self) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for j in 0..self.a_i.nrows() {
            let row = self.a_i.row(j);
            let scale = row.norm();
            if scale == 0.0 {
                out.push(j);
                continue;
            }
            let mut lp = LinearProgram::new(self.dim);
            lp.objective = row.iter().map(|x| x / scale).collect();
            lp.bounds = vec![(-1.0, 1.0); self.dim];
            self.add_rows(&mut lp, 0);
            match lp.solve()? {
                LpOutcome::Optimal { objective, .. } if objective >= -1e-9 => out.push(j),
                LpOutcome::Optimal { .. } => {}
                LpOutcome::Infeasible => out.push(j),
                LpOutcome::Unbounded => {
                    return Err(Error::Lp("bounded LP reported unbounded".into()))
                }
            }
        }
        Ok(out)
    }

    /// Append the cone rows (normalized) on variables `offset..offset+dim` of an LP.
    pub(crate) fn add_rows(&self, lp: &mut LinearProgram, offset: usize) {
        let nvars = lp.objective.len();
        for (block, sense) in [(&self.a_i, Sense::Le), (&self.a_e, Sense::Eq)] {
            for r in 0..block.nrows() {
                let row = block.row(r);
                let s = row.norm();
                if s == 0.0 {
                    continue;
                }
                let mut coeffs = vec![0.0; nvars];
                for c in 0..self.dim {
                    coeffs[offset + c] = row[c] / s;
                }
                lp.add_row(coeffs, sense, 0.0);
            }
        }
    }

    /// Same cone with implicit equalities moved to the equality block.
    pub fn canonical(&self) -> Result<Self> {
        let implicit = self.implicit_equalities()?;
        self.face(&implicit)
    }

    /// Orthonormal basis (columns) of `span(cone)`.
    pub fn span_basis(&self) -> Result<DMatrix<f64>> {
        let c = self.canonical()?;
        Ok(linalg::null_space(&c.a_e, self.dim))
    }

    /// Orthonormal basis of the lineality space `cone ∩ −cone`.
    pub fn lineality(&self) -> DMatrix<f64> {
        linalg::null_space(&linalg::vstack(&self.a_i, &self.a_e), self.dim)
    }

    /// Extreme rays and lineality space by the double-description method.
    pub fn extreme_rays(&self) -> Result<ConeGenerators> {
        if self.dim > MAX_RAY_DIM {
            return Err(Error::DimensionTooLarge(self.dim, MAX_RAY_DIM));
        }
        let lin = self.lineality();
        let z = linalg::null_space(&linalg::vstack(&self.a_e, &lin.transpose()), self.dim);
        let r = z.ncols();
        if r == 0 {
            return Ok(ConeGenerators {
                rays: Vec::new(),
                lineality: lin,
            });
        }
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for j in 0..self.a_i.nrows() {
            let b = (self.a_i.row(j) * &z).transpose();
            let n = b.norm();
            if n > 1e-12 {
                rows.push(b / n);
            }
        }
        let bmat = |idx: &[usize]| -> DMatrix<f64> {
            let mut m = DMatrix::zeros(idx.len(), r);
            for (i, &j) in idx.iter().enumerate() {
                m.set_row(i, &rows[j].transpose());
            }
            m
        };
        // greedy choice of r independent rows
        let mut basis_rows: Vec<usize> = Vec::new();
        for j in 0..rows.len() {
            let mut trial = basis_rows.clone();
            trial.push(j);
            if linalg::rank(&bmat(&trial)) == trial.len() {
                basis_rows = trial;
            }
            if basis_rows.len() == r {
                break;
            }
        }
        if basis_rows.len() < r {
            return Err(Error::Domain(
                "cone is not pointed after removing lineality".into(),
            ));
        }
        let b0inv = bmat(&basis_rows)
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular initial simplex".into()))?;
        const TOL: f64 = 1e-10;
        struct Ray {
            z: DVector<f64>,
            zeros: Vec<usize>,
        }
        let mut rays: Vec<Ray> = (0..r)
            .map(|i| {
                let v = -b0inv.column(i).into_owned();
                let v = v.normalize();
                let zeros = basis_rows
                    .iter()
                    .copied()
                    .filter(|&j| rows[j].dot(&v).abs() <= TOL)
                    .collect();
                Ray { z: v, zeros }
            })
            .collect();
        for (j, b) in rows.iter().enumerate() {
            if basis_rows.contains(&j) {
                continue;
            }
            let vals: Vec<f64> = rays.iter().map(|ray| b.dot(&ray.z)).collect();
            let mut next: Vec<Ray> = Vec::new();
            let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] > TOL).collect();
            let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] < -TOL).collect();
            for &pi in &pos {
                for &ni in &neg {
                    let common: Vec<usize> = rays[pi]
                        .zeros
                        .iter()
                        .copied()
                        .filter(|k| rays[ni].zeros.contains(k))
                        .collect();
                    if r >= 2 && linalg::rank(&bmat(&common)) == r - 2 {
                        let w = &rays[ni].z * vals[pi] - &rays[pi].z * vals[ni];
                        let w = w.normalize();
                        let mut zeros = common;
                        zeros.push(j);
                        next.push(Ray { z: w, zeros });
                    }
                }
            }
            for (i, ray) in rays.into_iter().enumerate() {
                if vals[i] < -TOL {
                    next.push(ray);
                } else if vals[i].abs() <= TOL {
                    let mut ray = ray;
                    ray.zeros.push(j);
                    next.push(ray);
                }
            }
            rays = next;
        }
        let mut out: Vec<DVector<f64>> = Vec::new();
        for ray in rays {
            let v = (&z * &ray.z).normalize();
            if !out.iter().any(|u| (u - &v).norm() < 1e-9) {
                out.push(v);
            }
        }
        Ok(ConeGenerators {
            rays: out,
            lineality: lin,
        })
    }

    /// Euclidean projection onto the cone via its generators.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len())?;
        let gens = self.extreme_rays()?;
        let r = if gens.rays.is_empty() {
            DMatrix::zeros(self.dim, 0)
        } else {
            DMatrix::from_columns(&gens.rays)
        };
        let s = linalg::nnls_with_free(&r, &gens.lineality, v);
        let mut w = DVector::zeros(self.dim);
        if r.ncols() > 0 {
            w += &r * &s.lambda_i;
        }
        if gens.lineality.ncols() > 0 {
            w += &gens.lineality * &s.lambda_e;
        }
        Ok(w)
    }
}

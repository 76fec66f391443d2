//! Constraint qualifications and first-order KKT certification.
//!
//! Everything is computed in a chart `φ` of `M` at `p` and an adapted chart
//! `ψ` of `K` at `g(p)`, with `A = [Â 0]` and `W` selecting the coordinates
//! transverse to `K`. A multiplier is a covector `μ = Aᵀλ_I + Wᵀλ_E` with
//! `λ_I ≥ 0` and `f' + μ g' = 0`.

use nalgebra::{DMatrix, DVector};

use crate::geometry::Point;
use crate::linalg::{self, LinearProgram, LpOutcome, Sense};
use crate::problem::{LocalModel, ProblemInstance, Rep};
use crate::{Error, Result};

pub const TOL_KKT: f64 = 1e-8;
pub const TOL_ACT: f64 = 1e-7;

/// Activity of an active inequality row at a KKT point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankData {
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub rank_w_gprime: usize,
    pub rank_b_gprime: usize,
    pub mfcq_margin: f64,
    pub singular_values_b_gprime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CQReport {
    pub transversal: bool,
    pub mfcq: bool,
    pub zkrcq: bool,
    pub licq: bool,
    pub mfcq_witness: Option<DVector<f64>>,
    pub rank_data: RankData,
}

impl CQReport {
    /// `licq ⇒ zkrcq ⇒ transversal` and `mfcq ⇔ zkrcq`.
    pub fn chain_consistent(&self) -> bool {
        (!self.licq || self.zkrcq) && (!self.zkrcq || self.transversal) && self.mfcq == self.zkrcq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KKTCertificate {
    pub rep: Rep,
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    /// `μ` in adapted chart coordinates.
    pub mu_chart: DVector<f64>,
    pub lambda_i: DVector<f64>,
    pub lambda_e: DVector<f64>,
    pub stationarity_residual: f64,
    pub activity: Vec<Activity>,
}

impl KKTCertificate {
    pub fn strong_rows(&self) -> Vec<usize> {
        (0..self.activity.len())
            .filter(|&j| self.activity[j] == Activity::Strong)
            .collect()
    }
}

/// `f' + g'ᵀμ` in `φ` coordinates.
pub fn stationarity_vector(lm: &LocalModel, mu_chart: &DVector<f64>) -> DVector<f64> {
    &lm.f_prime + lm.g_prime.transpose() * mu_chart
}

pub fn check_transversality(prob: &ProblemInstance, p: &Point, _tol: f64) -> Result<bool> {
    let lm = LocalModel::at(prob, p, Rep::default())?;
    Ok(transversal_of(&lm))
}

fn transversal_of(lm: &LocalModel) -> bool {
    let n = lm.data.n;
    let span = lm
        .data
        .inner_cone()
        .span_basis()
        .unwrap_or_else(|_| DMatrix::zeros(n, 0));
    linalg::rank(&linalg::hstack(&lm.g_prime, &span)) == n
}

/// MFCQ test: surjectivity of `W g'` and a strictly feasible direction; returns the witness `x̂`.
pub fn check_mfcq(
    prob: &ProblemInstance,
    p: &Point,
    tol: f64,
) -> Result<(bool, Option<DVector<f64>>)> {
    let lm = LocalModel::at(prob, p, Rep::default())?;
    let (ok, w, _) = mfcq_of(&lm, tol)?;
    Ok((ok, w))
}

fn mfcq_of(lm: &LocalModel, tol: f64) -> Result<(bool, Option<DVector<f64>>, f64)> {
    let m = lm.dim_m();
    let wg = lm.w_gprime();
    let ag = lm.a_gprime();
    if linalg::rank(&wg) != wg.nrows() {
        return Ok((false, None, f64::NEG_INFINITY));
    }
    let mut lp = LinearProgram::new(m + 1);
    lp.objective[m] = -1.0;
    for j in 0..m {
        lp.bounds[j] = (-1.0, 1.0);
    }
    lp.bounds[m] = (f64::NEG_INFINITY, 1.0);
    for r in 0..wg.nrows() {
        let mut row: Vec<f64> = wg.row(r).iter().copied().collect();
        row.push(0.0);
        lp.add_row(row, Sense::Eq, 0.0);
    }
    for r in 0..ag.nrows() {
        let mut row: Vec<f64> = ag.row(r).iter().copied().collect();
        row.push(1.0);
        lp.add_row(row, Sense::Le, 0.0);
    }
    match lp.solve()? {
        LpOutcome::Optimal { x, .. } => {
            let s = x[m];
            let witness = DVector::from_column_slice(&x[..m]);
            Ok((s > tol, (s > tol).then_some(witness), s))
        }
        _ => Ok((false, None, f64::NEG_INFINITY)),
    }
}

/// ZKRCQ: `g'(T_pM) − T^i_qK = T_qN`, tested by one feasibility LP per direction `±e_j`.
pub fn check_zkrcq(prob: &ProblemInstance, p: &Point, _tol: f64) -> Result<bool> {
    let lm = LocalModel::at(prob, p, Rep::default())?;
    zkrcq_of(&lm)
}

fn zkrcq_of(lm: &LocalModel) -> Result<bool> {
    let (n, m) = (lm.data.n, lm.dim_m());
    let a = lm.data.a_rows();
    let w = lm.data.w_rows();
    for j in 0..n {
        for sign in [1.0, -1.0] {
            // variables (w ∈ R^m, u ∈ R^n): g'w − u = ±e_j, A u ≤ 0, W u = 0
            let mut lp = LinearProgram::new(m + n);
            for r in 0..n {
                let mut row: Vec<f64> = lm.g_prime.row(r).iter().copied().collect();
                row.extend((0..n).map(|c| if c == r { -1.0 } else { 0.0 }));
                lp.add_row(row, Sense::Eq, if r == j { sign } else { 0.0 });
            }
            for r in 0..a.nrows() {
                let mut row = vec![0.0; m];
                row.extend(a.row(r).iter().copied());
                lp.add_row(row, Sense::Le, 0.0);
            }
            for r in 0..w.nrows() {
                let mut row = vec![0.0; m];
                row.extend(w.row(r).iter().copied());
                lp.add_row(row, Sense::Eq, 0.0);
            }
            if !matches!(lp.solve()?, LpOutcome::Optimal { .. }) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// LICQ: `rank([A; W] g') = ℓ + n − k`.
pub fn check_licq(prob: &ProblemInstance, p: &Point, _tol: f64) -> Result<bool> {
    let lm = LocalModel::at(prob, p, Rep::default())?;
    Ok(licq_of(&lm))
}

fn licq_of(lm: &LocalModel) -> bool {
    let b = linalg::vstack(&lm.a_gprime(), &lm.w_gprime());
    linalg::rank(&b) == b.nrows()
}

/// All four qualifications in one representation.
pub fn check_cqs(prob: &ProblemInstance, p: &Point, rep: Rep, tol: f64) -> Result<CQReport> {
    let lm = LocalModel::at(prob, p, rep)?;
    let (mfcq, mfcq_witness, margin) = mfcq_of(&lm, tol)?;
    let b = linalg::vstack(&lm.a_gprime(), &lm.w_gprime());
    Ok(CQReport {
        transversal: transversal_of(&lm),
        mfcq,
        zkrcq: zkrcq_of(&lm)?,
        licq: licq_of(&lm),
        mfcq_witness,
        rank_data: RankData {
            n: lm.data.n,
            k: lm.data.k,
            ell: lm.data.ell,
            rank_w_gprime: linalg::rank(&lm.w_gprime()),
            rank_b_gprime: linalg::rank(&b),
            mfcq_margin: margin,
            singular_values_b_gprime: linalg::singular_values(&b),
        },
    })
}

/// Multiplier recovery in the primary representation.
pub fn solve_kkt(prob: &ProblemInstance, p: &Point, tol: f64) -> Result<KKTCertificate> {
    solve_kkt_in(prob, p, Rep::default(), tol)
}

pub fn solve_kkt_in(
    prob: &ProblemInstance,
    p: &Point,
    rep: Rep,
    tol: f64,
) -> Result<KKTCertificate> {
    let lm = LocalModel::at(prob, p, rep)?;
    kkt_from_model(&lm, tol)
}

/// Minimal-residual multiplier for a local model; `NoMultiplier` above `tol·(1 + ‖f'‖)`.
pub fn kkt_from_model(lm: &LocalModel, tol: f64) -> Result<KKTCertificate> {
    let a = lm.data.a_rows();
    let w = lm.data.w_rows();
    let ci = (&a * &lm.g_prime).transpose();
    let ce = (&w * &lm.g_prime).transpose();
    let fit = linalg::nnls_with_free(&ci, &ce, &(-&lm.f_prime));
    let mu_chart = a.transpose() * &fit.lambda_i + w.transpose() * &fit.lambda_e;
    let residual = stationarity_vector(lm, &mu_chart).norm();
    let bound = tol * (1.0 + lm.f_prime.norm());
    if residual > bound {
        return Err(Error::NoMultiplier {
            residual,
            tol: bound,
        });
    }
    let activity = fit
        .lambda_i
        .iter()
        .map(|&l| {
            if l > TOL_ACT {
                Activity::Strong
            } else {
                Activity::Weak
            }
        })
        .collect();
    Ok(KKTCertificate {
        rep: lm.rep,
        n: lm.data.n,
        k: lm.data.k,
        ell: lm.data.ell,
        mu_chart,
        lambda_i: fit.lambda_i,
        lambda_e: fit.lambda_e,
        stationarity_residual: residual,
        activity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSetInfo {
    pub unique: bool,
    pub dim_estimate: usize,
    /// Inequality multipliers that vanish on the whole multiplier set.
    pub implicit_zeros: Vec<usize>,
}

/// Affine dimension of `{(λ_I, λ_E) : λ_I ≥ 0, C λ = −f'}` with `C = [(Ag')ᵀ (Wg')ᵀ]`.
pub fn multiplier_set_probe(
    prob: &ProblemInstance,
    p: &Point,
    tol: f64,
) -> Result<MultiplierSetInfo> {
    let lm = LocalModel::at(prob, p, Rep::default())?;
    let cert = kkt_from_model(&lm, tol)?;
    let ci = lm.a_gprime().transpose();
    let ce = lm.w_gprime().transpose();
    let c = linalg::hstack(&ci, &ce);
    let (ell, cols, m) = (ci.ncols(), c.ncols(), c.nrows());
    let lambda = DVector::from_iterator(
        cols,
        cert.lambda_i.iter().chain(cert.lambda_e.iter()).copied(),
    );
    let rhs = &c * &lambda;
    let mut implicit_zeros = Vec::new();
    for j in 0..ell {
        let mut lp = LinearProgram::new(cols);
        lp.objective[j] = -1.0;
        for i in 0..ell {
            lp.bounds[i] = (0.0, f64::INFINITY);
        }
        for r in 0..m {
            lp.add_row(c.row(r).iter().copied().collect(), Sense::Eq, rhs[r]);
        }
        let zero = match lp.solve()? {
            LpOutcome::Optimal { x, .. } => x[j] <= 1e-9 * (1.0 + lambda.norm()),
            LpOutcome::Unbounded => false,
            LpOutcome::Infeasible => cert.lambda_i[j] <= TOL_ACT,
        };
        if zero {
            implicit_zeros.push(j);
        }
    }
    let mut e = DMatrix::zeros(implicit_zeros.len(), cols);
    for (r, &j) in implicit_zeros.iter().enumerate() {
        e[(r, j)] = 1.0;
    }
    let dim_estimate = cols - linalg::rank(&linalg::vstack(&c, &e));
    Ok(MultiplierSetInfo {
        unique: dim_estimate == 0,
        dim_estimate,
        implicit_zeros,
    })
}

/// Classical multipliers of a Euclidean NLP `g_I(x) ≤ 0`, `g_E(x) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalKKT {
    pub eta_i: DVector<f64>,
    pub eta_e: DVector<f64>,
    /// Which inequality constraints are active at `g(p)`.
    pub active: Vec<bool>,
    /// `Σ |η_I,j g_I,j(x)|`.
    pub complementarity: f64,
    /// `‖∇f + g_I'ᵀη_I + g_E'ᵀη_E‖`.
    pub stationarity_residual: f64,
    /// Largest multiplier component on unconstrained coordinates.
    pub free_leak: f64,
}

/// Expand a certificate to classical multipliers `(η_I, η_E)` for sign-pattern constraint sets.
pub fn classical_report(
    cert: &KKTCertificate,
    prob: &ProblemInstance,
    p: &Point,
) -> Result<ClassicalKKT> {
    let pattern = prob.k.as_sign_pattern().ok_or_else(|| {
        Error::ModelMismatch(format!("`{}` is not a sign-pattern set", prob.k.name()))
    })?;
    if !prob.m.name().starts_with("R^") || !prob.n.name().starts_with("R^") {
        return Err(Error::ModelMismatch(
            "classical report needs Euclidean M and N".into(),
        ));
    }
    let lm = LocalModel::at(prob, p, cert.rep)?;
    if cert.mu_chart.len() != lm.data.n {
        return Err(Error::InvalidCertificate(
            "multiplier has the wrong dimension".into(),
        ));
    }
    let q = &lm.q;
    let mu_amb = lm.data.chart.forward_jacobian(q)?.transpose() * &cert.mu_chart;
    let mut eta_i = Vec::new();
    let mut eta_e = Vec::new();
    let mut active = Vec::new();
    let mut complementarity = 0.0;
    let mut free_leak: f64 = 0.0;
    for (i, s) in pattern.signs().iter().enumerate() {
        match s {
            crate::corners::Sign::NonPos => {
                let is_active = q[i].abs() <= crate::corners::ACTIVE_TOL;
                let eta = if is_active { mu_amb[i] } else { 0.0 };
                complementarity += (eta * q[i]).abs();
                eta_i.push(eta);
                active.push(is_active);
            }
            crate::corners::Sign::Zero => eta_e.push(mu_amb[i]),
            crate::corners::Sign::Free => free_leak = free_leak.max(mu_amb[i].abs()),
        }
    }
    let r_chart = stationarity_vector(&lm, &cert.mu_chart);
    let stationarity_residual = (lm.phi.forward_jacobian(p)?.transpose() * r_chart).norm();
    Ok(ClassicalKKT {
        eta_i: DVector::from_vec(eta_i),
        eta_e: DVector::from_vec(eta_e),
        active,
        complementarity,
        stationarity_residual,
        free_leak,
    })
}

//! Local SQP through pull-backs: every iteration re-centers the chart of `M`,
//! the retraction and the adapted chart of `K`, solves a QP in tangent
//! coordinates and retracts.

mod qp;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::corners::TOL_FEAS;
use crate::firstorder::{kkt_from_model, KKTCertificate};
use crate::geometry::{Point, Retraction};
use crate::linalg;
use crate::numdiff;
use crate::problem::{LocalModel, ProblemInstance, Rep};
use crate::{Error, Result};

pub use qp::{LocalQp, QpSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    FdLagrangian,
    Bfgs,
    Identity,
}

impl HessianMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fd-lagrangian" => Some(Self::FdLagrangian),
            "bfgs" => Some(Self::Bfgs),
            "identity" => Some(Self::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FdLagrangian => "fd-lagrangian",
            Self::Bfgs => "bfgs",
            Self::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub tol_step: f64,
    pub hessian_mode: HessianMode,
    /// Initial ℓ1 penalty weight.
    pub merit_penalty: f64,
    pub seed: u64,
    /// Box trust-region radius in tangent coordinates.
    pub trust_radius: f64,
    /// Slack below which constraints are treated as active when re-centering.
    pub anchor_eps: f64,
    pub rep: Rep,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_kkt: 1e-8,
            tol_step: 1e-14,
            hessian_mode: HessianMode::FdLagrangian,
            merit_penalty: 1.0,
            seed: 0,
            trust_radius: 1.0,
            anchor_eps: 1e-2,
            rep: Rep::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Breakdown,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIter => "max_iter",
            Self::Breakdown => "breakdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub kkt_residual: f64,
    pub feasibility: f64,
    pub step_norm: f64,
    pub step_length: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub penalty: f64,
    pub active_rows: usize,
    pub second_order_correction: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: Point,
    pub certificate: Option<KKTCertificate>,
    pub iterations: Vec<IterRecord>,
    pub status: SolveStatus,
    pub message: String,
}

/// Backtracking on `φ(t)` with Armijo constant 1e-4; `φ` errors count as rejections.
pub fn merit_linesearch<F>(phi: F, phi0: f64, slope: f64, max_halvings: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut t = 1.0;
    for _ in 0..=max_halvings {
        if let Ok(val) = phi(t) {
            let accept = if slope < 0.0 {
                val <= phi0 + 1e-4 * t * slope
            } else {
                val < phi0
            };
            if accept && val.is_finite() {
                return Ok(t);
            }
        }
        t *= 0.5;
    }
    Err(Error::LineSearchFailure(max_halvings))
}

/// `V max(|Λ|, δ) Vᵀ`.
fn clamp_eigenvalues(h: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(linalg::symmetrize(h));
    let d = eig.eigenvalues.map(|l| l.abs().max(delta));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

struct Iterate<'a> {
    prob: &'a ProblemInstance,
    lm: LocalModel,
    retraction: Retraction,
}

impl Iterate<'_> {
    fn lagrangian(&self, v: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
        let p = self.retraction.apply(v)?;
        let gbar = self.lm.data.chart.forward(&self.prob.eval_g(&p))?;
        Ok(self.prob.eval_f(&p) + mu.dot(&gbar))
    }

    fn gbar(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.lm
            .data
            .chart
            .forward(&self.prob.eval_g(&self.retraction.apply(v)?))
    }

    fn merit(&self, v: &DVector<f64>, rho: f64) -> Result<f64> {
        let p = self.retraction.apply(v)?;
        Ok(merit(self.prob, &p, rho))
    }

    /// QP with constraints `A(ḡ₀ + g'v) ≤ 0`, `W(ḡ₀ + g'v) = 0`; `shift` replaces `ḡ₀` when given.
    fn qp(&self, h: DMatrix<f64>, delta: f64, shift: Option<&DVector<f64>>) -> LocalQp {
        let a = self.lm.data.a_rows();
        let w = self.lm.data.w_rows();
        let g0 = shift.unwrap_or(&self.lm.g_bar0);
        LocalQp {
            h,
            g: self.lm.f_prime.clone(),
            a_i: &a * &self.lm.g_prime,
            b_i: -(&a * g0),
            a_e: &w * &self.lm.g_prime,
            b_e: -(&w * g0),
            delta,
        }
    }
}

/// `f(p) + ρ·violation(g(p))`.
pub fn merit(prob: &ProblemInstance, p: &Point, rho: f64) -> f64 {
    prob.eval_f(p) + rho * prob.k.violation(&prob.eval_g(p))
}

fn solve_qp_robust(it: &Iterate, h: &DMatrix<f64>, delta: f64) -> Result<QpSolution> {
    let scale = h.amax().max(1.0);
    let attempt = |hm: DMatrix<f64>| -> Result<QpSolution> {
        let qp = it.qp(hm, delta, None);
        match qp.solve() {
            Err(Error::QpInfeasible) => qp.elastic()?.solve(),
            other => other,
        }
    };
    match attempt(h + DMatrix::identity(h.nrows(), h.nrows()) * (1e-10 * scale)) {
        Err(Error::Breakdown(_)) => attempt(clamp_eigenvalues(h, 1e-4 * scale)),
        other => other,
    }
}

/// Local SQP from `p0`.
pub fn solve(prob: &ProblemInstance, p0: &Point, opts: &SolveOptions) -> Result<SolveResult> {
    if !prob.m.contains(p0, 1e-8) {
        return Err(Error::Domain(format!(
            "start point is not on {}",
            prob.m.name()
        )));
    }
    let rep = Rep {
        chart: 0,
        ..opts.rep
    };
    let mut p = p0.clone();
    let mut rho = opts.merit_penalty;
    let mut trace = Vec::new();
    let mut bfgs: Option<DMatrix<f64>> = None;
    let finish = |p: Point, trace: Vec<IterRecord>, status: SolveStatus, message: String| {
        let certificate = LocalModel::at(prob, &p, rep)
            .ok()
            .and_then(|lm| kkt_from_model(&lm, opts.tol_kkt).ok());
        Ok(SolveResult {
            point: p,
            certificate,
            iterations: trace,
            status,
            message,
        })
    };
    for k in 0..=opts.max_iter {
        if prob.k.contains(&prob.eval_g(&p), TOL_FEAS) {
            if let Ok(lm) = LocalModel::at(prob, &p, rep) {
                if let Ok(cert) = kkt_from_model(&lm, opts.tol_kkt) {
                    let feas = prob.k.violation(&prob.eval_g(&p));
                    if feas <= opts.tol_kkt {
                        return Ok(SolveResult {
                            point: p,
                            certificate: Some(cert),
                            iterations: trace,
                            status: SolveStatus::Converged,
                            message: format!("converged after {k} iterations"),
                        });
                    }
                }
            }
        }
        if k == opts.max_iter {
            break;
        }
        let q_hat = match prob.k.anchor(&prob.eval_g(&p), opts.anchor_eps) {
            Ok(q) => q,
            Err(e) => {
                return finish(
                    p,
                    trace,
                    SolveStatus::Breakdown,
                    format!("anchor failed: {e}"),
                )
            }
        };
        let lm = match LocalModel::anchored(prob, &p, &q_hat, rep) {
            Ok(lm) => lm,
            Err(e) => {
                return finish(
                    p,
                    trace,
                    SolveStatus::Breakdown,
                    format!("local model failed: {e}"),
                )
            }
        };
        let retraction = prob.m.retraction(&p, rep.retraction)?;
        let it = Iterate {
            prob,
            lm,
            retraction,
        };
        let m = it.lm.dim_m();
        // least-squares multiplier estimate for the Hessian
        let ci = it.lm.a_gprime().transpose();
        let ce = it.lm.w_gprime().transpose();
        let fit = linalg::nnls_with_free(&ci, &ce, &(-&it.lm.f_prime));
        let mu_est = it.lm.data.a_rows().transpose() * &fit.lambda_i
            + it.lm.data.w_rows().transpose() * &fit.lambda_e;
        let kkt_residual = fit.residual;
        let h = match opts.hessian_mode {
            HessianMode::Identity => DMatrix::identity(m, m),
            HessianMode::Bfgs => bfgs.clone().unwrap_or_else(|| DMatrix::identity(m, m)),
            HessianMode::FdLagrangian => {
                match numdiff::hessian(|v| it.lagrangian(v, &mu_est), &DVector::zeros(m), 1e-4) {
                    Ok(h) => linalg::symmetrize(&h),
                    Err(e) => {
                        return finish(
                            p,
                            trace,
                            SolveStatus::Breakdown,
                            format!("Hessian failed: {e}"),
                        )
                    }
                }
            }
        };
        let gnorm = linalg::singular_values(&it.lm.g_prime)
            .into_iter()
            .fold(0.0, f64::max);
        let mut delta = opts.trust_radius;
        if it.lm.data.radius.is_finite() && gnorm > 0.0 {
            delta = delta.min(0.9 * it.lm.data.radius / (gnorm * (m as f64).sqrt()));
        }
        delta = delta.min(0.5 * it.retraction.domain_radius / (m as f64).sqrt());
        let sol = match solve_qp_robust(&it, &h, delta) {
            Ok(s) => s,
            Err(e) => return finish(p, trace, SolveStatus::Breakdown, format!("QP failed: {e}")),
        };
        let v = sol.v.clone();
        let mu_qp = it.lm.data.a_rows().transpose() * &sol.lambda_i
            + it.lm.data.w_rows().transpose() * &sol.lambda_e;
        rho = rho
            .max(2.0 * mu_qp.amax() + 1.0)
            .max(2.0 * mu_est.amax() + 1.0);
        let merit0 = merit(prob, &p, rho);
        let viol0 = prob.k.violation(&prob.eval_g(&p));
        let slope = it.lm.f_prime.dot(&v) - rho * viol0;
        let tiny = v.amax() <= opts.tol_step.max(1e-15) * (1.0 + p.amax());
        let mut soc = false;
        let (step, t) = if tiny {
            (v.clone(), 1.0)
        } else {
            let full = it.merit(&v, rho);
            let full_ok = full
                .as_ref()
                .map(|&val| val <= merit0 + 1e-4 * slope.min(0.0))
                .unwrap_or(false);
            if full_ok {
                (v.clone(), 1.0)
            } else {
                let corrected = it.gbar(&v).ok().and_then(|gv| {
                    let shift = &gv - &it.lm.g_prime * &v;
                    let qp = it.qp(
                        h.clone() + DMatrix::identity(m, m) * 1e-10,
                        delta,
                        Some(&shift),
                    );
                    let s = qp.solve().ok()?;
                    let val = it.merit(&s.v, rho).ok()?;
                    (val <= merit0 + 1e-4 * slope.min(0.0)).then_some(s.v)
                });
                match corrected {
                    Some(vs) => {
                        soc = true;
                        (vs, 1.0)
                    }
                    None => match merit_linesearch(|t| it.merit(&(&v * t), rho), merit0, slope, 30)
                    {
                        Ok(t) => (v.clone(), t),
                        Err(e) => {
                            return finish(
                                p,
                                trace,
                                SolveStatus::Breakdown,
                                format!("line search: {e}"),
                            );
                        }
                    },
                }
            }
        };
        let s = &step * t;
        let p_new = match it.retraction.apply(&s) {
            Ok(x) => prob.m.project(&x),
            Err(e) => {
                return finish(
                    p,
                    trace,
                    SolveStatus::Breakdown,
                    format!("retraction failed: {e}"),
                )
            }
        };
        if opts.hessian_mode == HessianMode::Bfgs {
            let x0 = DVector::zeros(m);
            let g0 = numdiff::gradient(|v| it.lagrangian(v, &mu_qp), &x0, numdiff::FD_STEP);
            let g1 = numdiff::gradient(|v| it.lagrangian(v, &mu_qp), &s, numdiff::FD_STEP);
            if let (Ok(g0), Ok(g1)) = (g0, g1) {
                bfgs = Some(damped_bfgs(&h, &s, &(g1 - g0)));
            }
        }
        let merit_after = merit(prob, &p_new, rho);
        trace.push(IterRecord {
            iter: k,
            f: prob.eval_f(&p),
            kkt_residual,
            feasibility: viol0,
            step_norm: s.norm(),
            step_length: t,
            merit_before: merit0,
            merit_after,
            penalty: rho,
            active_rows: it.lm.data.ell,
            second_order_correction: soc,
        });
        p = p_new;
    }
    finish(
        p,
        trace,
        SolveStatus::MaxIter,
        format!("no convergence within {} iterations", opts.max_iter),
    )
}

/// Powell-damped BFGS update of `b` with step `s` and gradient change `y`.
pub fn damped_bfgs(b: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let bs = b * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-16 {
        return b.clone();
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if sr <= 1e-16 {
        return b.clone();
    }
    b - &bs * bs.transpose() / sbs + &r * r.transpose() / sr
}

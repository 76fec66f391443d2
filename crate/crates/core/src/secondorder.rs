//! Pulled-back problems, critical cones, Lagrangian Hessians and second-order verdicts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cones::{PolyhedralCone, MAX_RAY_DIM};
use crate::firstorder::{stationarity_vector, KKTCertificate};
use crate::geometry::{LinearizingMap, Point, Retraction};
use crate::linalg::{self, LinearProgram, LpOutcome, Sense};
use crate::numdiff;
use crate::problem::{LocalModel, ProblemInstance};
use crate::{Error, Result};

/// Default FD step for Lagrangian Hessians.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Level gap above which a Hessian is flagged ill-conditioned.
pub const RICHARDSON_FLAG: f64 = 1e-4;
/// Relative bound on `‖L̄'(0, μ)‖` required before forming a Hessian.
pub const TOL_STATIONARY: f64 = 1e-6;

/// `f̄ = f ∘ R_p`, `ḡ = S_q ∘ g ∘ R_p` in tangent coordinates.
#[derive(Debug, Clone)]
pub struct PulledBackProblem {
    pub prob: ProblemInstance,
    pub base: Point,
    pub q: Point,
    pub retraction: Retraction,
    pub linmap: LinearizingMap,
    /// Inner tangent cone of `K` at `q` in the coordinates of `linmap`.
    pub cone_bar: PolyhedralCone,
}

impl PulledBackProblem {
    /// Pull-back with the `r`-th retraction of `M` and the linearizing map of the `a`-th adapted chart.
    pub fn new(
        prob: &ProblemInstance,
        p: &Point,
        retraction: usize,
        adapted: usize,
    ) -> Result<Self> {
        let q = prob.ensure_feasible(p)?;
        let reference = prob.k.adapted_chart(&q, 0)?;
        let target = prob.k.adapted_chart(&q, adapted)?;
        let cone = reference.inner_cone();
        let name = format!("S[{}]", prob.k.adapted_variant_names()[adapted]);
        let linmap =
            LinearizingMap::from_chart(name, target.chart.clone(), reference.chart.as_ref())?
                .adapted(cone);
        let r = prob.m.retraction(p, retraction)?;
        Self::with_maps(prob, p, r, linmap)
    }

    /// Pull-back with explicit maps; the linearizing map must use the primary adapted coordinates at `g(p)`.
    pub fn with_maps(
        prob: &ProblemInstance,
        p: &Point,
        retraction: Retraction,
        linmap: LinearizingMap,
    ) -> Result<Self> {
        let q = prob.ensure_feasible(p)?;
        let cone_bar = match &linmap.adapted_to {
            Some(c) => c.clone(),
            None => prob.k.adapted_chart(&q, 0)?.inner_cone(),
        };
        Ok(Self {
            prob: prob.clone(),
            base: p.clone(),
            q,
            retraction,
            linmap,
            cone_bar,
        })
    }

    pub fn dim(&self) -> usize {
        self.prob.m.dim()
    }

    pub fn f_bar(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.prob.eval_f(&self.retraction.apply(v)?))
    }

    pub fn g_bar(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.linmap
            .apply(&self.prob.eval_g(&self.retraction.apply(v)?))
    }
}

/// `L̄(v, μ) = f̄(v) + ⟨μ, ḡ(v)⟩`.
pub fn lagrangian_value(
    pb: &PulledBackProblem,
    v: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<f64> {
    Ok(pb.f_bar(v)? + mu.dot(&pb.g_bar(v)?))
}

/// Gradient of `L̄(·, μ)` at 0 by central differences.
pub fn lagrangian_gradient(pb: &PulledBackProblem, mu: &DVector<f64>) -> Result<DVector<f64>> {
    numdiff::gradient(
        |v| lagrangian_value(pb, v, mu),
        &DVector::zeros(pb.dim()),
        numdiff::FD_STEP,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianForm {
    pub base: Point,
    pub chart_id: String,
    pub matrix: DMatrix<f64>,
    /// Max-norm difference between the `h` and `h/2` levels.
    pub gap: f64,
    pub ill_conditioned: bool,
}

impl HessianForm {
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * v))
    }
}

/// Hessian of `L̄(·, μ)` at 0 with Richardson refinement; requires stationarity.
pub fn lagrangian_hessian(
    pb: &PulledBackProblem,
    mu: &DVector<f64>,
    h: f64,
) -> Result<HessianForm> {
    let grad = lagrangian_gradient(pb, mu)?;
    let fbar_grad =
        numdiff::gradient(|v| pb.f_bar(v), &DVector::zeros(pb.dim()), numdiff::FD_STEP)?;
    if grad.norm() > TOL_STATIONARY * (1.0 + fbar_grad.norm()) {
        return Err(Error::NotStationary(grad.norm()));
    }
    let x0 = DVector::zeros(pb.dim());
    let coarse = numdiff::hessian(|v| lagrangian_value(pb, v, mu), &x0, h)?;
    let fine = numdiff::hessian(|v| lagrangian_value(pb, v, mu), &x0, h / 2.0)?;
    let gap = (&coarse - &fine).amax();
    let matrix = linalg::symmetrize(&((&fine * 4.0 - &coarse) / 3.0));
    Ok(HessianForm {
        base: pb.base.clone(),
        chart_id: format!("{}|{}", pb.retraction.name, pb.linmap.name),
        matrix,
        gap,
        ill_conditioned: gap > RICHARDSON_FLAG,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalCone {
    /// `{v ∈ L(p, g, K) : f'(p) v = 0}` in the primary chart of `M`.
    pub cone_m: PolyhedralCone,
    /// Inner tangent cone with strongly active rows turned into equalities.
    pub cone_n: PolyhedralCone,
    /// `{v ∈ L(p, g, K) : μ g'(p) v = 0}`.
    pub cone_m_via_mu: PolyhedralCone,
}

pub fn critical_cone(
    prob: &ProblemInstance,
    p: &Point,
    cert: &KKTCertificate,
) -> Result<CriticalCone> {
    let lm = LocalModel::at(prob, p, cert.rep)?;
    if cert.mu_chart.len() != lm.data.n || cert.lambda_i.len() != lm.data.ell {
        return Err(Error::InvalidCertificate(
            "dimensions do not match the local model".into(),
        ));
    }
    let residual = stationarity_vector(&lm, &cert.mu_chart).norm();
    if residual > TOL_STATIONARY * (1.0 + lm.f_prime.norm()) {
        return Err(Error::InvalidCertificate(format!(
            "stationarity residual {residual:.3e}"
        )));
    }
    if cert.lambda_i.iter().any(|&l| l < -1e-12) {
        return Err(Error::InvalidCertificate(
            "negative inequality multiplier".into(),
        ));
    }
    let lin = lm.linearizing_cone()?;
    let cone_m = lin.with_equality(&lm.f_prime)?;
    let cone_m_via_mu = lin.with_equality(&(lm.g_prime.transpose() * &cert.mu_chart))?;
    let cone_n = lm.data.inner_cone().face(&cert.strong_rows())?;
    Ok(CriticalCone {
        cone_m,
        cone_n,
        cone_m_via_mu,
    })
}

/// Unit vector sampled from a cone (rays and lineality for cones, a Gaussian for subspaces).
pub fn sample_cone(cone: &PolyhedralCone, rng: &mut ChaCha8Rng) -> Result<Option<DVector<f64>>> {
    let c = cone.canonical()?;
    let v = if c.is_subspace() {
        let z = linalg::null_space(&c.a_e, c.dim);
        if z.ncols() == 0 {
            return Ok(None);
        }
        &z * DVector::from_fn(z.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal))
    } else {
        let gens = c.extreme_rays()?;
        let mut v = DVector::zeros(c.dim);
        for r in &gens.rays {
            let w: f64 = -rng.gen_range(1e-3f64..1.0).ln();
            v += r * (w * if rng.gen_bool(0.3) { 0.0 } else { 1.0 });
        }
        if gens.lineality.ncols() > 0 {
            v += &gens.lineality
                * DVector::from_fn(gens.lineality.ncols(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
        }
        if v.norm() < 1e-12 {
            match gens.rays.first() {
                Some(r) => r.clone(),
                None => return Ok(None),
            }
        } else {
            v
        }
    };
    let n = v.norm();
    Ok((n > 1e-12).then(|| v / n))
}

/// Number of disagreements between the two definitions of `C_M` over `samples` draws from each.
pub fn critical_cone_agreement(cc: &CriticalCone, samples: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..samples {
        for (from, to) in [
            (&cc.cone_m, &cc.cone_m_via_mu),
            (&cc.cone_m_via_mu, &cc.cone_m),
        ] {
            if let Some(v) = sample_cone(from, &mut rng)? {
                if !to.contains(&v, 1e-7)? {
                    bad += 1;
                }
            }
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub samples: usize,
    pub max_on_cone: f64,
    /// Sampled directions outside `C_M` with `(H₁[v,v], H₂[v,v])`.
    pub off_cone: Vec<(DVector<f64>, f64, f64)>,
    pub max_off_cone: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compares the two Hessians on sampled unit vectors of `C_M`, and records off-cone values.
pub fn invariance_check(
    cc: &CriticalCone,
    h1: &HessianForm,
    h2: &HessianForm,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cc.cone_m.dim;
    let mut max_on_cone: f64 = 0.0;
    let mut taken = 0;
    for _ in 0..samples {
        if let Some(v) = sample_cone(&cc.cone_m, &mut rng)? {
            max_on_cone = max_on_cone.max((h1.quad(&v) - h2.quad(&v)).abs());
            taken += 1;
        }
    }
    let mut off_cone = Vec::new();
    let mut max_off_cone: f64 = 0.0;
    for _ in 0..samples.min(50) {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        if !cc.cone_m.contains(&v, 1e-7)? {
            let (a, b) = (h1.quad(&v), h2.quad(&v));
            max_off_cone = max_off_cone.max((a - b).abs());
            off_cone.push((v, a, b));
        }
    }
    Ok(InvarianceReport {
        samples: taken,
        max_on_cone,
        off_cone,
        max_off_cone,
        tol,
        pass: max_on_cone <= tol,
    })
}

/// Hessians of the components of `Θ = lm1 ∘ lm2⁻¹` at 0.
pub fn theta_second_derivative(
    lm1: &LinearizingMap,
    lm2: &LinearizingMap,
    h: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let dim = lm1.apply(&lm1.base)?.len();
    let x0 = DVector::zeros(dim);
    let theta = |x: &DVector<f64>| lm1.apply(&lm2.apply_inverse(x)?);
    (0..dim)
        .map(|i| numdiff::hessian(|x| Ok(theta(x)?[i]), &x0, h))
        .collect()
}

/// `‖Θ''(0)‖ ≤ tol` for `Θ = lm1 ∘ lm2⁻¹`.
pub fn second_order_consistent(
    lm1: &LinearizingMap,
    lm2: &LinearizingMap,
    h: f64,
    tol: f64,
) -> Result<bool> {
    if (&lm1.base - &lm2.base).norm() > 1e-12 * (1.0 + lm1.base.norm()) {
        return Err(Error::Domain(
            "linearizing maps have different base points".into(),
        ));
    }
    let norm = theta_second_derivative(lm1, lm2, h)?
        .iter()
        .map(|m| m.norm())
        .fold(0.0, f64::max);
    Ok(norm <= tol)
}

/// Exact minimum of `vᵀHv` over the unit vectors of a cone.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeMinimum {
    /// The cone is `{0}`.
    Trivial,
    Attained {
        value: f64,
        witness: DVector<f64>,
    },
    TooLarge {
        dim: usize,
    },
}

/// Eigenvalue clusters of a symmetric matrix as `(value, basis)`, ascending.
fn clusters(h: &DMatrix<f64>, tol: f64) -> Vec<(f64, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(h.clone());
    let mut idx: Vec<usize> = (0..h.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in idx {
        let lam = eig.eigenvalues[i];
        match out.last_mut() {
            Some((v, members)) if (lam - *v).abs() <= tol => members.push(i),
            _ => out.push((lam, vec![i])),
        }
    }
    out.into_iter()
        .map(|(v, members)| {
            let cols: Vec<DVector<f64>> = members
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect();
            (v, DMatrix::from_columns(&cols))
        })
        .collect()
}

/// A nonzero vector of `span(u) ∩ {v : a_i v ≤ 0}`, if any.
fn cone_point_in_span(a_i: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<Option<DVector<f64>>> {
    let d = u.ncols();
    let au = a_i * u;
    if d == 1 {
        for s in [1.0, -1.0] {
            let v = u.column(0) * s;
            if (a_i * &v).iter().all(|&x| x <= 1e-10 * (1.0 + a_i.amax())) {
                return Ok(Some(v.into_owned()));
            }
        }
        return Ok(None);
    }
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut lp = LinearProgram::new(d);
            lp.objective[i] = -s;
            lp.bounds = vec![(-1.0, 1.0); d];
            for r in 0..au.nrows() {
                let n = au.row(r).norm();
                if n > 1e-14 {
                    lp.add_row(au.row(r).iter().map(|x| x / n).collect(), Sense::Le, 0.0);
                }
            }
            if let LpOutcome::Optimal { x, objective } = lp.solve()? {
                if -objective > 1e-9 {
                    let v = u * DVector::from_vec(x);
                    return Ok(Some(v.normalize()));
                }
            }
        }
    }
    Ok(None)
}

/// Minimum of `H` over `cone ∩ sphere` by spectral face enumeration; exact up to `dim ≤ 12`.
pub fn cone_minimum(h: &DMatrix<f64>, cone: &PolyhedralCone) -> Result<ConeMinimum> {
    let c = cone.canonical()?;
    let z = linalg::null_space(&c.a_e, c.dim);
    if z.ncols() == 0 {
        return Ok(ConeMinimum::Trivial);
    }
    let h = linalg::symmetrize(h);
    let ctol = 1e-6 * h.amax().max(1.0);
    if c.is_subspace() {
        let hz = z.transpose() * &h * &z;
        let (value, u) = clusters(&hz, ctol).into_iter().next().expect("nonempty");
        return Ok(ConeMinimum::Attained {
            value,
            witness: (&z * u.column(0)).normalize(),
        });
    }
    if z.ncols() > MAX_RAY_DIM {
        return Ok(ConeMinimum::TooLarge { dim: z.ncols() });
    }
    // rows restricted to span, duplicates and zero rows removed
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for r in 0..c.a_i.nrows() {
        let a = c.a_i.row(r).transpose();
        let n = a.norm();
        if n < 1e-14 {
            continue;
        }
        let a = a / n;
        if !rows.iter().any(|b| (b - &a).norm() < 1e-12) {
            rows.push(a);
        }
    }
    if rows.len() > 20 {
        return Ok(ConeMinimum::TooLarge { dim: z.ncols() });
    }
    let a_i = DMatrix::from_fn(rows.len(), c.dim, |i, j| rows[i][j]);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << rows.len()) {
        let chosen: Vec<usize> = (0..rows.len()).filter(|&j| mask & (1 << j) != 0).collect();
        let b = linalg::vstack(&c.a_e, &linalg::select_rows(&a_i, &chosen));
        let s = linalg::null_space(&b, c.dim);
        if s.ncols() == 0 {
            continue;
        }
        let hs = s.transpose() * &h * &s;
        for (value, u) in clusters(&hs, ctol) {
            if best.as_ref().is_some_and(|(bv, _)| value >= *bv) {
                break;
            }
            if let Some(w) = cone_point_in_span(&a_i, &(&s * u))? {
                best = Some((value, w));
                break;
            }
        }
    }
    Ok(match best {
        Some((value, witness)) => ConeMinimum::Attained { value, witness },
        None => ConeMinimum::Trivial,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Holds { min_value: f64 },
    Fails { witness: DVector<f64>, value: f64 },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }
}

fn verdict(h: &DMatrix<f64>, cone: &PolyhedralCone, ok: impl Fn(f64) -> bool) -> Result<Verdict> {
    Ok(match cone_minimum(h, cone)? {
        ConeMinimum::Trivial => Verdict::Holds {
            min_value: f64::INFINITY,
        },
        ConeMinimum::Attained { value, .. } if ok(value) => Verdict::Holds { min_value: value },
        ConeMinimum::Attained { value, witness } => Verdict::Fails { witness, value },
        ConeMinimum::TooLarge { dim } => Verdict::Inconclusive {
            reason: format!("cone dimension {dim} exceeds {MAX_RAY_DIM}"),
        },
    })
}

/// SOSC: `H[v,v] > tol` on `C_M \ {0}` (unit vectors).
pub fn sosc_check(h: &HessianForm, c: &CriticalCone, tol: f64) -> Result<Verdict> {
    verdict(&h.matrix, &c.cone_m, |m| m > tol)
}

/// SONC: `H[v,v] ≥ −tol` on `C_M`.
pub fn sonc_check(h: &HessianForm, c: &CriticalCone, tol: f64) -> Result<Verdict> {
    verdict(&h.matrix, &c.cone_m, |m| m >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corners::{Sign, SignPattern};
    use crate::firstorder::{solve_kkt, TOL_KKT};
    use crate::geometry::{Euclidean, Manifold};
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn form(m: DMatrix<f64>) -> HessianForm {
        HessianForm {
            base: v(&[0.0]),
            chart_id: "t".into(),
            matrix: m,
            gap: 0.0,
            ill_conditioned: false,
        }
    }

    fn cc(cone: PolyhedralCone) -> CriticalCone {
        CriticalCone {
            cone_m: cone.clone(),
            cone_n: cone.clone(),
            cone_m_via_mu: cone,
        }
    }

    fn remark() -> ProblemInstance {
        let r2: Arc<dyn Manifold> = Arc::new(Euclidean::new(2));
        ProblemInstance::new(
            "remark",
            r2.clone(),
            r2,
            Arc::new(SignPattern::new(vec![Sign::NonPos, Sign::Free])),
            |p| -p[0],
            |p| p.clone(),
        )
    }

    #[test]
    fn verdict_examples() {
        let sub = PolyhedralCone::new(
            DMatrix::zeros(0, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        assert!(sosc_check(&form(DMatrix::identity(2, 2)), &cc(sub), 1e-9)
            .unwrap()
            .holds());
        let whole = PolyhedralCone::whole(2);
        let ind = form(DMatrix::from_diagonal(&v(&[1.0, -1.0])));
        match sosc_check(&ind, &cc(whole.clone()), 1e-9).unwrap() {
            Verdict::Fails { witness, value } => {
                assert!((witness[1].abs() - 1.0).abs() < 1e-12);
                assert!((value + 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(!sonc_check(&ind, &cc(whole.clone()), 1e-9).unwrap().holds());
        assert!(sonc_check(&form(DMatrix::zeros(2, 2)), &cc(whole), 1e-9)
            .unwrap()
            .holds());
    }

    #[test]
    fn copositive_on_orthant_but_not_psd() {
        // [[1, 2], [2, 1]] is indefinite but nonnegative on the orthant v ≥ 0
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let orthant = PolyhedralCone::new(-DMatrix::identity(2, 2), DMatrix::zeros(0, 2)).unwrap();
        match cone_minimum(&h, &orthant).unwrap() {
            ConeMinimum::Attained { value, witness } => {
                assert!((value - 1.0).abs() < 1e-9);
                assert!(orthant.contains(&witness, 1e-9).unwrap());
            }
            other => panic!("{other:?}"),
        }
        let neg = -h;
        match cone_minimum(&neg, &orthant).unwrap() {
            ConeMinimum::Attained { value, .. } => assert!((value + 3.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn repeated_eigenvalue_cluster_is_handled() {
        // H = diag(−1, −1, 2) on {v₁ ≤ 0, v₂ ≤ 0, v₁ + v₂ ≥ −v₃ ...}: eigenspace of −1 meets the cone
        let h = DMatrix::from_diagonal(&v(&[-1.0, -1.0, 2.0]));
        let cone = PolyhedralCone::new(
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, -1.0, 2.0, 0.0]),
            DMatrix::zeros(0, 3),
        )
        .unwrap();
        match cone_minimum(&h, &cone).unwrap() {
            ConeMinimum::Attained { value, witness } => {
                assert!((value + 1.0).abs() < 1e-9);
                assert!(cone.contains(&witness, 1e-9).unwrap());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn remark_critical_cone_and_hessians() {
        let prob = remark();
        let p = v(&[0.0, 0.0]);
        let cert = solve_kkt(&prob, &p, TOL_KKT).unwrap();
        let c = critical_cone(&prob, &p, &cert).unwrap();
        for cone in [&c.cone_m, &c.cone_n, &c.cone_m_via_mu] {
            assert!(cone.contains(&v(&[0.0, 1.0]), 1e-9).unwrap());
            assert!(cone.contains(&v(&[0.0, -1.0]), 1e-9).unwrap());
            assert!(!cone.contains(&v(&[-1.0, 0.0]), 1e-9).unwrap());
        }
        assert_eq!(critical_cone_agreement(&c, 50, 3).unwrap(), 0);
        let pb = PulledBackProblem::new(&prob, &p, 0, 0).unwrap();
        let h = lagrangian_hessian(&pb, &cert.mu_chart, HESSIAN_STEP).unwrap();
        assert!(h.matrix.amax() < 1e-6);
        assert!(sonc_check(&h, &c, 1e-6).unwrap().holds());
        assert!(!sosc_check(&h, &c, 1e-6).unwrap().holds());
    }

    #[test]
    fn nonstationary_point_is_rejected() {
        let prob = remark();
        let p = v(&[-1.0, 0.0]);
        let pb = PulledBackProblem::new(&prob, &p, 0, 0).unwrap();
        assert!(matches!(
            lagrangian_hessian(&pb, &v(&[0.0, 0.0]), HESSIAN_STEP),
            Err(Error::NotStationary(_))
        ));
    }

    #[test]
    fn theta_of_identical_maps_is_flat() {
        let base = v(&[0.0, 0.0]);
        let id = LinearizingMap::new("id", base.clone(), |y| Ok(y.clone()))
            .with_inverse(|s| Ok(s.clone()));
        let s3 = LinearizingMap::new("s3", base, |y| Ok(v(&[y[0] + y[0] * y[1], y[1]])))
            .with_inverse(|s| Ok(v(&[s[0] / (1.0 + s[1]), s[1]])));
        assert!(second_order_consistent(&id, &id, 1e-4, 1e-6).unwrap());
        assert!(!second_order_consistent(&id, &s3, 1e-4, 1e-6).unwrap());
        let theta = theta_second_derivative(&s3, &id, 1e-4).unwrap();
        assert!((theta[0][(0, 1)] - 1.0).abs() < 1e-6);
    }
}

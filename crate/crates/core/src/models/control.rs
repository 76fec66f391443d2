use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{get_f64, get_usize, Model, Params, Reference};
use crate::cones::PolyhedralCone;
use crate::corners::{ProductSet, Sign, SignPattern, Whole};
use crate::geometry::{Euclidean, LinearizingMap, Manifold, ProductManifold, Sphere};
use crate::problem::ProblemInstance;
use crate::{Error, Result};

/// Solution of the linear adjoint system `Qy = u`, `Qλ = −(y − y_d)`, `αu = λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub y_d: DVector<f64>,
    pub q: DMatrix<f64>,
    pub alpha: f64,
}

impl AdjointSolution {
    /// Direct solve of the adjoint system for the quadratic chain.
    pub fn solve(n_nodes: usize, alpha: f64, stiffness: f64) -> Result<Self> {
        let q = stiffness_matrix(n_nodes, stiffness);
        let y_d = target_state(n_nodes);
        let qinv = q
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::BadParams("singular stiffness matrix".into()))?;
        let lhs = &q + &qinv / alpha;
        let lambda = lhs
            .lu()
            .solve(&y_d)
            .ok_or_else(|| Error::BadParams("singular adjoint system".into()))?;
        let u = &lambda / alpha;
        let y = &qinv * &u;
        Ok(Self {
            y,
            u,
            lambda,
            y_d,
            q,
            alpha,
        })
    }

    /// Residuals of state, adjoint and gradient equations at `(y, u, λ)`.
    pub fn residuals(&self, y: &DVector<f64>, u: &DVector<f64>, lambda: &DVector<f64>) -> [f64; 3] {
        [
            (&self.q * y - u).amax(),
            (&self.q * lambda + y - &self.y_d).amax(),
            (u * self.alpha - lambda).amax(),
        ]
    }

    /// The point `p = (y, u)`.
    pub fn point(&self) -> DVector<f64> {
        stack(&self.y, &self.u)
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn stiffness_matrix(n: usize, s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * s,
        1 => -s,
        _ => 0.0,
    })
}

fn target_state(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| (PI * (i + 1) as f64 / (n + 1) as f64).sin())
}

fn chain_params(params: &Params) -> Result<(usize, f64, f64)> {
    let n = get_usize(params, "n_nodes")?;
    let alpha = get_f64(params, "alpha")?;
    let s = get_f64(params, "stiffness")?;
    if n < 2 || alpha <= 0.0 || s <= 0.0 {
        return Err(Error::BadParams(
            "need n_nodes ≥ 2, alpha > 0 and stiffness > 0".into(),
        ));
    }
    Ok((n, alpha, s))
}

/// Elastic chain `E(y, u) = ½yᵀQy + β/4 Σyᵢ⁴ − uᵀy` with `g(y, u) = (y, ∂_yE)` into `T*Y = R^N × R^N`.
pub fn build_control_model(params: &Params) -> Result<Model> {
    let (n, alpha, s) = chain_params(params)?;
    let beta = get_f64(params, "beta")?;
    if beta < 0.0 {
        return Err(Error::BadParams("`beta` must be nonnegative".into()));
    }
    let q = stiffness_matrix(n, s);
    let y_d = target_state(n);
    let r2n: Arc<dyn Manifold> = Arc::new(Euclidean::new(2 * n));
    let mut signs = vec![Sign::Free; n];
    signs.extend(std::iter::repeat_n(Sign::Zero, n));

    let q1 = q.clone();
    let g = move |p: &DVector<f64>| {
        let y = p.rows(0, n).into_owned();
        let u = p.rows(n, n);
        let c = &q1 * &y + y.map(|v| beta * v * v * v) - u;
        stack(&y, &c)
    };
    let q2 = q.clone();
    let g_jac = move |p: &DVector<f64>| {
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut dc = q2.clone();
        for i in 0..n {
            dc[(i, i)] += 3.0 * beta * p[i] * p[i];
        }
        j.view_mut((n, 0), (n, n)).copy_from(&dc);
        j.view_mut((n, n), (n, n))
            .copy_from(&(-DMatrix::identity(n, n)));
        j
    };
    let yd1 = y_d.clone();
    let f = move |p: &DVector<f64>| {
        0.5 * (p.rows(0, n) - &yd1).norm_squared() + 0.5 * alpha * p.rows(n, n).norm_squared()
    };
    let yd2 = y_d.clone();
    let f_grad = move |p: &DVector<f64>| stack(&(p.rows(0, n) - &yd2), &(p.rows(n, n) * alpha));

    let prob = ProblemInstance::new(
        format!("control-chain[N={n}]"),
        r2n.clone(),
        r2n,
        Arc::new(SignPattern::new(signs)),
        f,
        g,
    )
    .with_derivatives(f_grad, g_jac);

    let start = DVector::zeros(2 * n);
    let reference = if beta == 0.0 {
        let adj = AdjointSolution::solve(n, alpha, s)?;
        let p = adj.point();
        Some(Reference {
            objective: Some(prob.eval_f(&p)),
            mu_chart: Some(stack(&DVector::zeros(n), &adj.lambda)),
            eta: Some(adj.lambda.clone()),
            point: p,
            origin: "direct solve of the linear adjoint system".into(),
        })
    } else {
        None
    };
    let linmaps = match &reference {
        Some(r) => vec![bundle_splitting(&prob.eval_g(&r.point), n)],
        None => Vec::new(),
    };
    Ok(Model {
        name: "control-chain".into(),
        params: params.clone(),
        problem: prob,
        start,
        reference,
        linmaps,
    })
}

/// `S(y, w) = (y − y*, w)`: the splitting `T_{0_y}(T*Y) ≅ T_yY × T*_yY`, adapted to the zero section.
fn bundle_splitting(q: &DVector<f64>, n: usize) -> LinearizingMap {
    let base = q.clone();
    let y_star = q.rows(0, n).into_owned();
    let y_back = y_star.clone();
    let mut a_e = DMatrix::zeros(n, 2 * n);
    a_e.view_mut((0, n), (n, n)).fill_with_identity();
    let cone =
        PolyhedralCone::new(DMatrix::zeros(0, 2 * n), a_e).expect("zero-section tangent space");
    LinearizingMap::new("bundle-splitting", base, move |p| {
        Ok(stack(&(p.rows(0, n) - &y_star), &p.rows(n, n).into_owned()))
    })
    .with_inverse(move |s| Ok(stack(&(s.rows(0, n) + &y_back), &s.rows(n, n).into_owned())))
    .adapted(cone)
}

fn perp(y: &[f64]) -> [f64; 2] {
    [-y[1], y[0]]
}

/// Circle-valued chain `Y = (S¹)^N` with both ends clamped to `(1, 0)`, forced along `a = (0, 1)`.
///
/// The cotangent fiber at `y_i` is trivialized by the unit tangent `J y_i`, so
/// `g(y, u) = (y, c)` with `c_i = ⟨∇_{y_i}E, J y_i⟩`.
pub fn build_control_circle(params: &Params) -> Result<Model> {
    let (n, alpha, s) = chain_params(params)?;
    let s1: Arc<dyn Manifold> = Arc::new(Sphere::new(1));
    let yspace: Arc<dyn Manifold> = Arc::new(ProductManifold::new(vec![s1; n]));
    let m: Arc<dyn Manifold> = Arc::new(ProductManifold::new(vec![
        yspace.clone(),
        Arc::new(Euclidean::new(n)),
    ]));
    let k = ProductSet::new(
        Arc::new(Whole::new(yspace.clone())),
        Arc::new(SignPattern::new(vec![Sign::Zero; n])),
    );
    let targets: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let th = 0.5 * (PI * (i + 1) as f64 / (n + 1) as f64).sin();
            [th.cos(), th.sin()]
        })
        .collect();

    let node = move |p: &DVector<f64>, i: isize| -> [f64; 2] {
        if i < 0 || i as usize >= n {
            [1.0, 0.0]
        } else {
            let i = i as usize;
            [p[2 * i], p[2 * i + 1]]
        }
    };
    // ∇_{y_i}E = −s(y_{i−1} + y_{i+1}) − u_i a
    let energy_grad = move |p: &DVector<f64>, i: usize| -> [f64; 2] {
        let (l, r) = (node(p, i as isize - 1), node(p, i as isize + 1));
        let ui = p[2 * n + i];
        [-s * (l[0] + r[0]), -s * (l[1] + r[1]) - ui]
    };
    let g = move |p: &DVector<f64>| {
        let mut out = p.rows(0, 2 * n).iter().copied().collect::<Vec<_>>();
        for i in 0..n {
            let gr = energy_grad(p, i);
            let jy = perp(&[p[2 * i], p[2 * i + 1]]);
            out.push(gr[0] * jy[0] + gr[1] * jy[1]);
        }
        DVector::from_vec(out)
    };
    let g_jac = move |p: &DVector<f64>| {
        let mut j = DMatrix::zeros(3 * n, 3 * n);
        j.view_mut((0, 0), (2 * n, 2 * n)).fill_with_identity();
        for i in 0..n {
            let row = 2 * n + i;
            let gr = energy_grad(p, i);
            // ∂/∂y_i ⟨G, J y_i⟩ = Jᵀ G
            j[(row, 2 * i)] = gr[1];
            j[(row, 2 * i + 1)] = -gr[0];
            let jy = perp(&[p[2 * i], p[2 * i + 1]]);
            for nb in [i as isize - 1, i as isize + 1] {
                if nb >= 0 && (nb as usize) < n {
                    let c = 2 * nb as usize;
                    j[(row, c)] = -s * jy[0];
                    j[(row, c + 1)] = -s * jy[1];
                }
            }
            j[(row, 2 * n + i)] = -jy[1];
        }
        j
    };
    let t1 = targets.clone();
    let f = move |p: &DVector<f64>| {
        let mut v = 0.0;
        for (i, t) in t1.iter().enumerate() {
            v += 0.5 * ((p[2 * i] - t[0]).powi(2) + (p[2 * i + 1] - t[1]).powi(2));
        }
        v + 0.5 * alpha * p.rows(2 * n, n).norm_squared()
    };
    let t2 = targets;
    let f_grad = move |p: &DVector<f64>| {
        let mut out = DVector::zeros(3 * n);
        for (i, t) in t2.iter().enumerate() {
            out[2 * i] = p[2 * i] - t[0];
            out[2 * i + 1] = p[2 * i + 1] - t[1];
        }
        out.rows_mut(2 * n, n)
            .copy_from(&(p.rows(2 * n, n) * alpha));
        out
    };
    let codomain: Arc<dyn Manifold> = Arc::new(ProductManifold::new(vec![
        yspace,
        Arc::new(Euclidean::new(n)),
    ]));
    let prob = ProblemInstance::new(
        format!("control-circle[N={n}]"),
        m,
        codomain,
        Arc::new(k),
        f,
        g,
    )
    .with_derivatives(f_grad, g_jac);
    let mut start = DVector::zeros(3 * n);
    for i in 0..n {
        start[2 * i] = 1.0;
    }
    Ok(Model {
        name: "control-circle".into(),
        params: params.clone(),
        problem: prob,
        start,
        reference: None,
        linmaps: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firstorder::{check_licq, solve_kkt};

    fn defaults(name: &str) -> Params {
        super::super::find(name).unwrap().defaults
    }

    #[test]
    fn adjoint_solution_satisfies_its_equations() {
        let adj = AdjointSolution::solve(20, 0.1, 1.0).unwrap();
        let r = adj.residuals(&adj.y, &adj.u, &adj.lambda);
        assert!(r.iter().all(|&x| x < 1e-12), "{r:?}");
    }

    #[test]
    fn generic_certificate_matches_adjoint() {
        let m = build_control_model(&defaults("control-chain")).unwrap();
        let r = m.reference.unwrap();
        let cert = solve_kkt(&m.problem, &r.point, 1e-8).unwrap();
        let mu = r.mu_chart.unwrap();
        assert!((&cert.mu_chart - &mu).amax() < 1e-8);
        assert!(check_licq(&m.problem, &r.point, 1e-9).unwrap());
    }

    #[test]
    fn circle_start_is_feasible() {
        let m = build_control_circle(&defaults("control-circle")).unwrap();
        assert!(m.problem.is_feasible(&m.start, 1e-12));
        assert!(check_licq(&m.problem, &m.start, 1e-9).unwrap());
    }
}

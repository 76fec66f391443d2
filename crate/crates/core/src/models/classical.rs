use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{get_bool, get_usize, Model, Params, Reference};
use crate::corners::{Sign, SignPattern};
use crate::geometry::{Euclidean, Manifold};
use crate::problem::ProblemInstance;
use crate::{Error, Result};

/// Planted KKT data of a classical instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalData {
    pub x_star: DVector<f64>,
    pub eta_i: DVector<f64>,
    pub eta_e: DVector<f64>,
    pub active: Vec<bool>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sym(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| gauss(rng));
    (&a + a.transpose()) * (0.5 * scale)
}

/// `g_j(x) = a_jᵀd + ½dᵀB_j d + c_j` and `f(x) = c_fᵀd + ½dᵀQd` with `d = x − x*`.
#[allow(clippy::too_many_arguments)]
pub fn classical_instance(
    m: usize,
    n_i: usize,
    n_e: usize,
    n_active: usize,
    n_weak: usize,
    nonlinear: bool,
    seed: u64,
) -> Result<(ProblemInstance, ClassicalData)> {
    if n_active > n_i || n_weak > n_active || n_active + n_e > m || m == 0 {
        return Err(Error::BadParams(format!(
            "need n_weak ≤ n_active ≤ n_i and n_active + n_e ≤ m (got m={m}, n_i={n_i}, n_e={n_e}, n_active={n_active}, n_weak={n_weak})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_star = DVector::from_fn(m, |_, _| gauss(&mut rng));
    let rows = n_i + n_e;
    let a = DMatrix::from_fn(rows, m, |_, _| gauss(&mut rng));
    let curv = if nonlinear { 0.2 } else { 0.0 };
    let b: Vec<DMatrix<f64>> = (0..rows).map(|_| sym(&mut rng, m, curv)).collect();
    let mut c = DVector::zeros(rows);
    let mut eta = DVector::zeros(rows);
    let mut active = vec![false; n_i];
    for i in 0..n_i {
        if i < n_active {
            active[i] = true;
            eta[i] = if i < n_weak {
                0.0
            } else {
                rng.gen_range(0.5..2.0)
            };
        } else {
            c[i] = -rng.gen_range(0.5..2.0);
        }
    }
    for j in n_i..rows {
        eta[j] = gauss(&mut rng);
    }
    let r = DMatrix::from_fn(m, m, |_, _| gauss(&mut rng));
    let q = DMatrix::identity(m, m) + &r * r.transpose() * (0.5 / m as f64);
    let c_f = -(a.transpose() * &eta);

    let (xs, a1, b1, c1) = (x_star.clone(), a.clone(), b.clone(), c.clone());
    let g = move |x: &DVector<f64>| {
        let d = x - &xs;
        DVector::from_fn(rows, |j, _| {
            (a1.row(j) * &d)[0] + 0.5 * d.dot(&(&b1[j] * &d)) + c1[j]
        })
    };
    let (xs, a2, b2) = (x_star.clone(), a.clone(), b.clone());
    let g_jac = move |x: &DVector<f64>| {
        let d = x - &xs;
        let mut j = a2.clone();
        for (r, br) in b2.iter().enumerate() {
            let row = (br * &d).transpose();
            j.set_row(r, &(j.row(r) + row));
        }
        j
    };
    let (xs, qf, cf) = (x_star.clone(), q.clone(), c_f.clone());
    let f = move |x: &DVector<f64>| {
        let d = x - &xs;
        cf.dot(&d) + 0.5 * d.dot(&(&qf * &d))
    };
    let (xs, qg, cg) = (x_star.clone(), q, c_f);
    let f_grad = move |x: &DVector<f64>| &cg + &qg * (x - &xs);

    let mut signs = vec![Sign::NonPos; n_i];
    signs.extend(std::iter::repeat_n(Sign::Zero, n_e));
    let rm: Arc<dyn Manifold> = Arc::new(Euclidean::new(m));
    let prob = ProblemInstance::new(
        format!("classical-nlp[m={m},n_i={n_i},n_e={n_e},seed={seed}]"),
        rm,
        Arc::new(Euclidean::new(rows)),
        Arc::new(SignPattern::new(signs)),
        f,
        g,
    )
    .with_derivatives(f_grad, g_jac);
    let data = ClassicalData {
        x_star,
        eta_i: eta.rows(0, n_i).into_owned(),
        eta_e: eta.rows(n_i, n_e).into_owned(),
        active,
    };
    Ok((prob, data))
}

fn wrap(
    name: &str,
    params: &Params,
    prob: ProblemInstance,
    data: &ClassicalData,
    seed: u64,
    origin: &str,
) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let start = &data.x_star + DVector::from_fn(data.x_star.len(), |_, _| rng.gen_range(-0.5..0.5));
    let eta = DVector::from_iterator(
        data.eta_i.len() + data.eta_e.len(),
        data.eta_i.iter().chain(data.eta_e.iter()).copied(),
    );
    Model {
        name: name.into(),
        params: params.clone(),
        start,
        reference: Some(Reference {
            objective: Some(prob.eval_f(&data.x_star)),
            point: data.x_star.clone(),
            mu_chart: None,
            eta: Some(eta),
            origin: origin.into(),
        }),
        problem: prob,
        linmaps: Vec::new(),
    }
}

pub fn build_classical_nlp(params: &Params) -> Result<Model> {
    let seed = get_usize(params, "seed")? as u64;
    let (prob, data) = classical_instance(
        get_usize(params, "m")?,
        get_usize(params, "n_i")?,
        get_usize(params, "n_e")?,
        get_usize(params, "n_active")?,
        get_usize(params, "n_weak")?,
        get_bool(params, "nonlinear")?,
        seed,
    )?;
    Ok(wrap(
        "classical-nlp",
        params,
        prob,
        &data,
        seed,
        "planted KKT point",
    ))
}

/// Strictly convex QP with two inequalities (one active) and one equality in `R³`.
pub fn build_convex_qp(params: &Params) -> Result<Model> {
    let seed = get_usize(params, "seed")? as u64;
    let (mut prob, data) = classical_instance(3, 2, 1, 1, 0, false, seed)?;
    prob.name = format!("convex-qp[seed={seed}]");
    Ok(wrap(
        "convex-qp",
        params,
        prob,
        &data,
        seed,
        "closed-form equality-constrained QP",
    ))
}

/// `½x₁² − ½x₂² + x₃` subject to `−x₃ ≤ 0`: KKT point at 0 with `λ = 1` and negative curvature along `x₂`.
pub fn build_indefinite_qp(params: &Params) -> Result<Model> {
    let r3: Arc<dyn Manifold> = Arc::new(Euclidean::new(3));
    let prob = ProblemInstance::new(
        "indefinite-qp",
        r3,
        Arc::new(Euclidean::new(1)),
        Arc::new(SignPattern::classical(1, 0)),
        |x| 0.5 * x[0] * x[0] - 0.5 * x[1] * x[1] + x[2],
        |x| DVector::from_vec(vec![-x[2]]),
    )
    .with_derivatives(
        |x| DVector::from_vec(vec![x[0], -x[1], 1.0]),
        |_| DMatrix::from_row_slice(1, 3, &[0.0, 0.0, -1.0]),
    );
    Ok(Model {
        name: "indefinite-qp".into(),
        params: params.clone(),
        start: DVector::from_vec(vec![0.5, 0.0, 0.5]),
        reference: Some(Reference {
            point: DVector::zeros(3),
            mu_chart: Some(DVector::from_vec(vec![1.0])),
            eta: Some(DVector::from_vec(vec![1.0])),
            objective: Some(0.0),
            origin: "closed form".into(),
        }),
        problem: prob,
        linmaps: Vec::new(),
    })
}

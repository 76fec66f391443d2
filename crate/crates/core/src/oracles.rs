//! Brute-force and finite-difference reference computations.
//!
//! Nothing here is used by the solve path. The routines are deliberately
//! simple so that they can serve as independent checks of the exact
//! algorithms in the other modules.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::cones::PolyhedralCone;
use crate::geometry::Point;
use crate::linalg;
use crate::problem::ProblemInstance;
use crate::{Error, Result};

/// Largest region dimension accepted by the grid oracles.
pub const MAX_GRID_DIM: usize = 3;

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    Ok(())
}

/// Central-difference Jacobian.
pub fn fd_jacobian<F>(map: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    check_step(h)?;
    let rows = map(x)?.len();
    let mut jac = DMatrix::zeros(rows, x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (map(&xp)? - map(&xm)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Central-difference Hessian (three-point diagonal, four-point mixed terms), symmetrized.
pub fn fd_hessian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    check_step(h)?;
    let n = x.len();
    let f0 = f(x)?;
    let shifted = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
        let mut y = x.clone();
        y[i] += si * h;
        y[j] += sj * h;
        f(&y)
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut yp = x.clone();
        let mut ym = x.clone();
        yp[i] += h;
        ym[i] -= h;
        hess[(i, i)] = (f(&yp)? - 2.0 * f0 + f(&ym)?) / (h * h);
        for j in 0..i {
            let v =
                (shifted(i, 1.0, j, 1.0)? - shifted(i, 1.0, j, -1.0)? - shifted(i, -1.0, j, 1.0)?
                    + shifted(i, -1.0, j, -1.0)?)
                    / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

const PROJ_STEP: f64 = 1e-7;
const PROJ_ITER: usize = 100;

/// Constraint values `(c_I, c_E)` of `K` at `g(φ⁻¹(x))`.
fn constraint_values(
    prob: &ProblemInstance,
    chart: &dyn crate::geometry::Chart,
    x: &DVector<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = chart.inverse(x)?;
    Ok(prob.k.constraint_functions(&prob.eval_g(&p)))
}

/// Feasible point near `x0` by repeated minimum-norm corrections of violated constraints.
fn feasible_correction(
    prob: &ProblemInstance,
    chart: &dyn crate::geometry::Chart,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut x = x0.clone();
    for _ in 0..PROJ_ITER {
        let (ci, ce) = constraint_values(prob, chart, &x)?;
        let scale = 1e-14 * (1.0 + x.norm());
        let viol_i: Vec<usize> = (0..ci.len()).filter(|&j| ci[j] > scale).collect();
        let viol_e = ce.iter().any(|c| c.abs() > scale);
        if viol_i.is_empty() && !viol_e {
            return Ok(x);
        }
        let stacked = |y: &DVector<f64>| -> Result<DVector<f64>> {
            let (a, b) = constraint_values(prob, chart, y)?;
            let mut out: Vec<f64> = viol_i.iter().map(|&j| a[j]).collect();
            out.extend(b);
            Ok(DVector::from_vec(out))
        };
        let c = stacked(&x)?;
        let jac = fd_jacobian(stacked, &x, PROJ_STEP)?;
        let d = -(linalg::pinv(&jac) * c);
        if d.norm() <= 1e-16 * (1.0 + x.norm()) {
            return Ok(x);
        }
        x += d;
    }
    Ok(x)
}

/// Tangential-sequence test for `v` (coordinates in the primary chart of `M` at `p`).
///
/// For `t_k = 2^{-k}`, `t_k·v` is corrected to a feasible `x_k`; `v` is accepted iff
/// `‖x_k/t_k − v‖/‖v‖` ends below 1e-3 and keeps decreasing over the last trials.
pub fn tangent_cone_oracle(
    prob: &ProblemInstance,
    p: &Point,
    v: &DVector<f64>,
    trials: usize,
) -> Result<bool> {
    prob.ensure_feasible(p)?;
    let chart = prob.m.chart(p, 0)?;
    if v.len() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            got: v.len(),
        });
    }
    let vn = v.norm();
    if vn == 0.0 {
        return Ok(true);
    }
    let trials = trials.max(4);
    // Start with a step well inside the chart.
    let t0 = (0.25 * chart.radius() / vn).min(0.5);
    let mut gaps = Vec::with_capacity(trials);
    for k in 0..trials {
        let t = t0 * 0.5f64.powi(k as i32);
        let x = feasible_correction(prob, chart.as_ref(), &(v * t))?;
        let (ci, ce) = constraint_values(prob, chart.as_ref(), &x)?;
        let viol = ci
            .iter()
            .map(|c| c.max(0.0))
            .chain(ce.iter().map(|c| c.abs()))
            .fold(0.0, f64::max);
        let gap = if viol > 1e-10 {
            f64::INFINITY
        } else {
            (x / t - v).norm() / vn
        };
        gaps.push(gap);
    }
    let last = gaps[trials - 1];
    if last < 1e-9 {
        return Ok(true);
    }
    let decreasing = gaps[trials - 3..].windows(2).all(|w| w[1] < 0.9 * w[0]);
    Ok(last < 1e-3 && decreasing)
}

/// Search region for [`grid_minimize`], in ambient coordinates of `M`.
#[derive(Debug, Clone, PartialEq)]
pub enum GridRegion {
    /// Axis-aligned box in `R^d`, `d ≤ 3`.
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    /// Geodesic disc on `S²`.
    SphereCap {
        center: DVector<f64>,
        radius: f64,
    },
    /// Great-circle arc on `S²` between two non-antipodal points.
    GeodesicArc {
        from: DVector<f64>,
        to: DVector<f64>,
    },
    Union(Vec<GridRegion>),
}

fn unit3(v: &DVector<f64>) -> Result<Vector3<f64>> {
    if v.len() != 3 || v.norm() < 1e-12 {
        return Err(Error::Domain(
            "sphere regions need nonzero vectors in R^3".into(),
        ));
    }
    Ok(Vector3::new(v[0], v[1], v[2]).normalize())
}

fn frame_of(c: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if c.x.abs() < 0.6 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (axis - c * c.dot(&axis)).normalize();
    (e1, c.cross(&e1))
}

impl GridRegion {
    fn dim(&self) -> usize {
        match self {
            GridRegion::Box { lo, .. } => lo.len(),
            GridRegion::SphereCap { .. } => 2,
            GridRegion::GeodesicArc { .. } => 1,
            GridRegion::Union(parts) => parts.iter().map(GridRegion::dim).max().unwrap_or(0),
        }
    }

    fn visit(&self, res: f64, out: &mut dyn FnMut(DVector<f64>)) -> Result<()> {
        match self {
            GridRegion::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lo.len(),
                        got: hi.len(),
                    });
                }
                let d = lo.len();
                let counts: Vec<usize> = (0..d)
                    .map(|j| (((hi[j] - lo[j]) / res).ceil().max(0.0) as usize) + 1)
                    .collect();
                let total: usize = counts.iter().product();
                for flat in 0..total {
                    let mut rest = flat;
                    let x = DVector::from_fn(d, |j, _| {
                        let i = rest % counts[j];
                        rest /= counts[j];
                        if counts[j] == 1 {
                            lo[j]
                        } else {
                            lo[j] + (hi[j] - lo[j]) * i as f64 / (counts[j] - 1) as f64
                        }
                    });
                    out(x);
                }
            }
            GridRegion::SphereCap { center, radius } => {
                let c = unit3(center)?;
                let (e1, e2) = frame_of(&c);
                let radius = radius.clamp(0.0, PI);
                let n_r = (radius / res).ceil() as usize;
                out(DVector::from_column_slice(c.as_slice()));
                for i in 1..=n_r {
                    let r = radius * i as f64 / n_r as f64;
                    let n_t = ((2.0 * PI * r.sin() / res).ceil() as usize).max(1);
                    for j in 0..n_t {
                        let th = 2.0 * PI * j as f64 / n_t as f64;
                        let p = c * r.cos() + (e1 * th.cos() + e2 * th.sin()) * r.sin();
                        out(DVector::from_column_slice(p.as_slice()));
                    }
                }
            }
            GridRegion::GeodesicArc { from, to } => {
                let (a, b) = (unit3(from)?, unit3(to)?);
                let omega = a.dot(&b).clamp(-1.0, 1.0).acos();
                if omega > PI - 1e-9 {
                    return Err(Error::Domain("arc endpoints are antipodal".into()));
                }
                let n = ((omega / res).ceil() as usize).max(1);
                for i in 0..=n {
                    let s = i as f64 / n as f64;
                    let p = if omega < 1e-15 {
                        a
                    } else {
                        (a * ((1.0 - s) * omega).sin() + b * (s * omega).sin()) / omega.sin()
                    };
                    out(DVector::from_column_slice(p.normalize().as_slice()));
                }
            }
            GridRegion::Union(parts) => {
                for part in parts {
                    part.visit(res, out)?;
                }
            }
        }
        Ok(())
    }
}

/// Exhaustive minimization of `f` over the feasible points of a grid.
///
/// Ties keep the first grid point in visiting order, so results are deterministic.
pub fn grid_minimize(
    prob: &ProblemInstance,
    region: &GridRegion,
    resolution: f64,
) -> Result<(Point, f64)> {
    check_step(resolution)?;
    let dim = region.dim();
    if dim > MAX_GRID_DIM {
        return Err(Error::DimensionTooLarge(dim, MAX_GRID_DIM));
    }
    let mut best: Option<(Point, f64)> = None;
    region.visit(resolution, &mut |x| {
        if x.len() != prob.m.ambient_dim() || !prob.is_feasible(&x, 1e-12) {
            return;
        }
        let v = prob.eval_f(&x);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    })?;
    best.ok_or_else(|| Error::Domain("no feasible grid point".into()))
}

/// Unit vectors of `S^{d−1}` at spacing about `res`, `d ≤ 3`.
fn sphere_grid(d: usize, res: f64) -> Vec<DVector<f64>> {
    match d {
        1 => vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -1.0),
        ],
        2 => {
            let n = (2.0 * PI / res).ceil() as usize;
            (0..n)
                .map(|i| {
                    let th = 2.0 * PI * i as f64 / n as f64;
                    DVector::from_vec(vec![th.cos(), th.sin()])
                })
                .collect()
        }
        _ => {
            let mut out = vec![
                DVector::from_vec(vec![0.0, 0.0, 1.0]),
                DVector::from_vec(vec![0.0, 0.0, -1.0]),
            ];
            let n_p = (PI / res).ceil() as usize;
            for i in 1..n_p {
                let ph = PI * i as f64 / n_p as f64;
                let n_t = ((2.0 * PI * ph.sin() / res).ceil() as usize).max(1);
                for j in 0..n_t {
                    let th = 2.0 * PI * j as f64 / n_t as f64;
                    out.push(DVector::from_vec(vec![
                        ph.sin() * th.cos(),
                        ph.sin() * th.sin(),
                        ph.cos(),
                    ]));
                }
            }
            out
        }
    }
}

/// Unit vectors on the great circle `{w : bᵀw = 0}` of `S²`.
fn circle_grid(b: &DVector<f64>, res: f64) -> Vec<DVector<f64>> {
    let c = Vector3::new(b[0], b[1], b[2]).normalize();
    let (e1, e2) = frame_of(&c);
    let n = (2.0 * PI / res).ceil() as usize;
    (0..n)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / n as f64;
            DVector::from_column_slice((e1 * th.cos() + e2 * th.sin()).as_slice())
        })
        .collect()
}

/// Grid minimum of `vᵀHv` over unit vectors of `cone`, `None` if the cone is `{0}`.
///
/// Equalities are eliminated with an orthonormal null-space basis; boundary
/// faces of the reduced cone are sampled explicitly.
pub fn cone_quadratic_minimum(
    h: &DMatrix<f64>,
    cone: &PolyhedralCone,
    res: f64,
) -> Result<Option<(DVector<f64>, f64)>> {
    check_step(res)?;
    let z = linalg::null_space(&cone.a_e, cone.dim);
    let d = z.ncols();
    if d == 0 {
        return Ok(None);
    }
    if d > MAX_GRID_DIM {
        return Err(Error::DimensionTooLarge(d, MAX_GRID_DIM));
    }
    let hz = z.transpose() * h * &z;
    let b = &cone.a_i * &z;
    let rows: Vec<DVector<f64>> = (0..b.nrows())
        .map(|r| b.row(r).transpose())
        .filter(|r: &DVector<f64>| r.norm() > 1e-12)
        .collect();
    let mut cands = sphere_grid(d, res);
    for (i, r) in rows.iter().enumerate() {
        match d {
            2 => {
                let w = DVector::from_vec(vec![-r[1], r[0]]).normalize();
                cands.push(-&w);
                cands.push(w);
            }
            3 => {
                cands.extend(circle_grid(r, res));
                for s in &rows[..i] {
                    let c = Vector3::new(r[0], r[1], r[2]).cross(&Vector3::new(s[0], s[1], s[2]));
                    if c.norm() > 1e-12 {
                        let w = DVector::from_column_slice(c.normalize().as_slice());
                        cands.push(-&w);
                        cands.push(w);
                    }
                }
            }
            _ => {}
        }
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    for w in cands {
        if (&b * &w).iter().any(|&x| x > 1e-10) {
            continue;
        }
        let val = w.dot(&(&hz * &w));
        if best.as_ref().is_none_or(|(_, bv)| val < *bv) {
            best = Some((w, val));
        }
    }
    Ok(best.map(|(w, val)| (&z * w, val)))
}

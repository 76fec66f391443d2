use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use super::{get_f64, get_vec, get_vecs, Model, Params, Reference};
use crate::corners::{Diagonal, SphericalPolygon};
use crate::geometry::{Manifold, ProductManifold, Sphere};
use crate::problem::ProblemInstance;
use crate::{Error, Result};

/// Triangle around the north pole at colatitude 0.6.
pub(crate) fn default_vertices_json() -> Value {
    let rows: Vec<Value> = (0..3)
        .map(|i| {
            let lon = 2.0 * PI * i as f64 / 3.0;
            let (s, c) = 0.6f64.sin_cos();
            Value::from(vec![s * lon.cos(), s * lon.sin(), c])
        })
        .collect();
    Value::Array(rows)
}

fn unit_target(params: &Params) -> Result<DVector<f64>> {
    let t = get_vec(params, "target")?;
    if t.len() != 3 || t.norm() < 1e-12 {
        return Err(Error::BadParams(
            "`target` must be a nonzero vector in R^3".into(),
        ));
    }
    Ok(t.normalize())
}

/// `f(p) = −⟨p, t⟩` on `S²`, `g = id`, `K` a geodesic polygon.
pub fn build_sphere_polygon(params: &Params) -> Result<Model> {
    let poly = SphericalPolygon::new(get_vecs(params, "vertices")?)?;
    let t = unit_target(params)?;
    let s2: Arc<dyn Manifold> = Arc::new(Sphere::new(2));
    let reference = poly.nearest_point(&t);
    let centroid = poly
        .vertices()
        .iter()
        .fold(DVector::zeros(3), |acc, v| acc + v)
        .normalize();
    let (t1, t2) = (t.clone(), t.clone());
    let prob = ProblemInstance::new(
        "sphere-polygon",
        s2.clone(),
        s2,
        Arc::new(poly),
        move |p| -p.dot(&t1),
        |p| p.clone(),
    )
    .with_derivatives(move |_| -&t2, |_| DMatrix::identity(3, 3));
    Ok(Model {
        name: "sphere-polygon".into(),
        params: params.clone(),
        start: centroid,
        reference: Some(Reference {
            objective: Some(-reference.dot(&t)),
            point: reference,
            mu_chart: None,
            eta: None,
            origin: "nearest polygon point to the target".into(),
        }),
        problem: prob,
        linmaps: Vec::new(),
    })
}

fn rot_z(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
}

/// `g(p) = (R_z(θ)p, p)` into `S² × S²` with `K` the diagonal.
pub fn build_diagonal_constraint(params: &Params) -> Result<Model> {
    let theta = get_f64(params, "theta")?;
    if theta.sin().abs() < 1e-6 {
        return Err(Error::BadParams(
            "`theta` must not be a multiple of π".into(),
        ));
    }
    let t = unit_target(params)?;
    let s2: Arc<dyn Manifold> = Arc::new(Sphere::new(2));
    let n: Arc<dyn Manifold> = Arc::new(ProductManifold::new(vec![s2.clone(), s2.clone()]));
    let r = rot_z(theta);
    let r1 = r.clone();
    let mut jac = DMatrix::zeros(6, 3);
    jac.view_mut((0, 0), (3, 3)).copy_from(&r);
    jac.view_mut((3, 0), (3, 3)).fill_with_identity();
    let t1 = t.clone();
    let t2 = t.clone();
    let prob = ProblemInstance::new(
        "diagonal-constraint",
        s2.clone(),
        n,
        Arc::new(Diagonal::new(s2)),
        move |p| -p.dot(&t1),
        move |p| {
            let rp = &r1 * p;
            DVector::from_iterator(6, rp.iter().chain(p.iter()).copied())
        },
    )
    .with_derivatives(move |_| -&t2, move |_| jac.clone());
    let pole = DVector::from_vec(vec![0.0, 0.0, if t[2] >= 0.0 { 1.0 } else { -1.0 }]);
    Ok(Model {
        name: "diagonal-constraint".into(),
        params: params.clone(),
        start: pole.clone(),
        reference: Some(Reference {
            objective: Some(-pole.dot(&t)),
            point: pole,
            mu_chart: None,
            eta: None,
            origin: "fixed point of the rotation closest to the target".into(),
        }),
        problem: prob,
        linmaps: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firstorder::solve_kkt;

    #[test]
    fn default_polygon_is_valid_and_target_exterior() {
        let m =
            build_sphere_polygon(&super::super::find("sphere-polygon").unwrap().defaults).unwrap();
        let r = m.reference.unwrap();
        assert!(m.problem.k.contains(&r.point, 1e-12));
        let t = get_vec(&m.params, "target").unwrap();
        assert!(!m.problem.k.contains(&t.normalize(), 0.0));
        assert!(m.problem.is_feasible(&m.start, 1e-12));
    }

    #[test]
    fn polygon_reference_is_kkt() {
        let m =
            build_sphere_polygon(&super::super::find("sphere-polygon").unwrap().defaults).unwrap();
        let r = m.reference.unwrap();
        let cert = solve_kkt(&m.problem, &r.point, 1e-8).unwrap();
        assert!(cert.stationarity_residual < 1e-8);
    }

    #[test]
    fn diagonal_reference_is_kkt() {
        let m =
            build_diagonal_constraint(&super::super::find("diagonal-constraint").unwrap().defaults)
                .unwrap();
        let r = m.reference.unwrap();
        assert!(m.problem.is_feasible(&r.point, 1e-12));
        let cert = solve_kkt(&m.problem, &r.point, 1e-8).unwrap();
        assert_eq!(cert.n, 4);
        assert!(cert.stationarity_residual < 1e-8);
    }
}

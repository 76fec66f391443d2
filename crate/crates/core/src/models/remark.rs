use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{get_f64, Model, Params, Reference};
use crate::cones::PolyhedralCone;
use crate::corners::{Sign, SignPattern};
use crate::geometry::{Euclidean, LinearizingMap, Manifold};
use crate::problem::ProblemInstance;
use crate::Result;

fn half_plane() -> PolyhedralCone {
    PolyhedralCone::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::zeros(0, 2),
    )
    .expect("static cone")
}

/// `f = −p₁`, `g = id`, `K = {p₁ ≤ 0}` in `R²`, with the maps `S₀,₁`, `S₀,₂`, `S₀,₃` at the origin.
pub fn build_remark_counterexample(params: &Params) -> Result<Model> {
    let alpha = get_f64(params, "alpha")?;
    let r2: Arc<dyn Manifold> = Arc::new(Euclidean::new(2));
    let prob = ProblemInstance::new(
        "remark-counterexample",
        r2.clone(),
        r2,
        Arc::new(SignPattern::new(vec![Sign::NonPos, Sign::Free])),
        |p| -p[0],
        |p| p.clone(),
    )
    .with_derivatives(
        |_| DVector::from_vec(vec![-1.0, 0.0]),
        |_| DMatrix::identity(2, 2),
    );
    let origin = DVector::zeros(2);
    let s1 = LinearizingMap::new("S01", origin.clone(), |p| Ok(p.clone()))
        .with_inverse(|s| Ok(s.clone()))
        .adapted(half_plane());
    let s2 = LinearizingMap::new("S02", origin.clone(), move |p| {
        Ok(DVector::from_vec(vec![p[0] + alpha * p[1] * p[1], p[1]]))
    })
    .with_inverse(move |s| Ok(DVector::from_vec(vec![s[0] - alpha * s[1] * s[1], s[1]])));
    let s3 = LinearizingMap::new("S03", origin.clone(), |p| {
        Ok(DVector::from_vec(vec![p[0] + p[0] * p[1], p[1]]))
    })
    .with_inverse(|s| {
        if s[1] <= -1.0 {
            return Err(crate::Error::Domain(
                "S03 is invertible only for s₂ > −1".into(),
            ));
        }
        Ok(DVector::from_vec(vec![s[0] / (1.0 + s[1]), s[1]]))
    })
    .adapted(half_plane());
    Ok(Model {
        name: "remark-counterexample".into(),
        params: params.clone(),
        problem: prob,
        start: DVector::from_vec(vec![-0.5, 0.3]),
        reference: Some(Reference {
            point: origin,
            mu_chart: Some(DVector::from_vec(vec![1.0, 0.0])),
            eta: Some(DVector::from_vec(vec![1.0])),
            objective: Some(0.0),
            origin: "closed form".into(),
        }),
        linmaps: vec![s1, s2, s3],
    })
}

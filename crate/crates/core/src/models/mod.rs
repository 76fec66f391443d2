//! Built-in problem instances and their registry.

mod classical;
mod control;
mod remark;
mod spherical;

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde_json::{Map, Value};

use crate::geometry::{LinearizingMap, Point};
use crate::problem::ProblemInstance;
use crate::{Error, Result};

pub use classical::{
    build_classical_nlp, build_convex_qp, build_indefinite_qp, classical_instance, ClassicalData,
};
pub use control::{build_control_circle, build_control_model, AdjointSolution};
pub use remark::build_remark_counterexample;
pub use spherical::{build_diagonal_constraint, build_sphere_polygon};

pub type Params = Map<String, Value>;

/// Known solution data shipped with a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub point: Point,
    /// Multiplier in the primary adapted chart at `g(point)`, if known.
    pub mu_chart: Option<DVector<f64>>,
    /// Classical multipliers `(η_I, η_E)` for sign-pattern constraint sets.
    pub eta: Option<DVector<f64>>,
    pub objective: Option<f64>,
    /// How the reference was obtained.
    pub origin: String,
}

/// A built problem with optional reference data and extra linearizing maps.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub params: Params,
    pub problem: ProblemInstance,
    pub start: Point,
    pub reference: Option<Reference>,
    /// Additional linearizing maps at the reference point, in primary adapted coordinates.
    pub linmaps: Vec<LinearizingMap>,
}

pub type BuildFn = fn(&Params) -> Result<Model>;

#[derive(Debug, Clone)]
pub struct ModelDescriptor {
    pub name: &'static str,
    pub summary: &'static str,
    pub defaults: Params,
    pub has_reference: bool,
    pub build: BuildFn,
}

impl ModelDescriptor {
    /// Defaults overridden by `overrides`; unknown keys are rejected.
    pub fn params(&self, overrides: &Params) -> Result<Params> {
        let mut out = self.defaults.clone();
        for (k, v) in overrides {
            if !out.contains_key(k) {
                return Err(Error::BadParams(format!(
                    "unknown parameter `{k}` for model `{}`",
                    self.name
                )));
            }
            out.insert(k.clone(), v.clone());
        }
        Ok(out)
    }

    pub fn instantiate(&self, overrides: &Params) -> Result<Model> {
        (self.build)(&self.params(overrides)?)
    }
}

fn params(pairs: &[(&str, Value)]) -> Params {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

/// All built-in models, sorted by name.
pub fn registry() -> Vec<ModelDescriptor> {
    use serde_json::json;
    let mut out = vec![
        ModelDescriptor {
            name: "classical-nlp",
            summary: "random Euclidean NLP g_I(x) ≤ 0, g_E(x) = 0 with a planted KKT point",
            defaults: params(&[
                ("m", json!(3)),
                ("n_i", json!(2)),
                ("n_e", json!(1)),
                ("n_active", json!(1)),
                ("n_weak", json!(0)),
                ("nonlinear", json!(true)),
                ("seed", json!(1)),
            ]),
            has_reference: true,
            build: build_classical_nlp,
        },
        ModelDescriptor {
            name: "convex-qp",
            summary: "strictly convex QP in R^3 with linear constraints and closed-form solution",
            defaults: params(&[("seed", json!(7))]),
            has_reference: true,
            build: build_convex_qp,
        },
        ModelDescriptor {
            name: "indefinite-qp",
            summary: "saddle ½x₁² − ½x₂² + x₃ subject to x₃ ≥ 0",
            defaults: Params::new(),
            has_reference: true,
            build: build_indefinite_qp,
        },
        ModelDescriptor {
            name: "sphere-polygon",
            summary: "geodesic polygon on S², f(p) = −⟨p, target⟩",
            defaults: params(&[
                ("vertices", spherical::default_vertices_json()),
                ("target", json!([0.62, 0.55, 0.56])),
            ]),
            has_reference: true,
            build: build_sphere_polygon,
        },
        ModelDescriptor {
            name: "diagonal-constraint",
            summary:
                "g(p) = (R p, p) into S² × S² with K the diagonal; feasible set = fixed points of R",
            defaults: params(&[("theta", json!(0.5)), ("target", json!([0.1, 0.2, 0.97]))]),
            has_reference: true,
            build: build_diagonal_constraint,
        },
        ModelDescriptor {
            name: "control-chain",
            summary: "discrete elastic chain, g(y, u) = (y, ∂_yE) into T*Y with K the zero section",
            defaults: params(&[
                ("n_nodes", json!(20)),
                ("alpha", json!(0.1)),
                ("beta", json!(0.0)),
                ("stiffness", json!(1.0)),
            ]),
            has_reference: true,
            build: build_control_model,
        },
        ModelDescriptor {
            name: "control-circle",
            summary: "circle-valued chain Y = (S¹)^N with fixed ends, K the zero section of T*Y",
            defaults: params(&[
                ("n_nodes", json!(4)),
                ("alpha", json!(0.5)),
                ("stiffness", json!(1.0)),
            ]),
            has_reference: false,
            build: build_control_circle,
        },
        ModelDescriptor {
            name: "remark-counterexample",
            summary: "f = −p₁, g = id, K = {p₁ ≤ 0} in R² with three linearizing maps at 0",
            defaults: params(&[("alpha", json!(1.0))]),
            has_reference: true,
            build: build_remark_counterexample,
        },
    ];
    out.sort_by_key(|d| d.name);
    out
}

pub fn find(name: &str) -> Option<ModelDescriptor> {
    registry().into_iter().find(|d| d.name == name)
}

/// Build a registered model with parameter overrides.
pub fn build(name: &str, overrides: &Params) -> Result<Model> {
    find(name)
        .ok_or_else(|| Error::BadParams(format!("unknown model `{name}`")))?
        .instantiate(overrides)
}

pub(crate) fn get_f64(p: &Params, key: &str) -> Result<f64> {
    p.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::BadParams(format!("parameter `{key}` must be a number")))
}

pub(crate) fn get_usize(p: &Params, key: &str) -> Result<usize> {
    p.get(key)
        .and_then(Value::as_u64)
        .map(|x| x as usize)
        .ok_or_else(|| Error::BadParams(format!("parameter `{key}` must be a nonnegative integer")))
}

pub(crate) fn get_bool(p: &Params, key: &str) -> Result<bool> {
    p.get(key)
        .and_then(Value::as_bool)
        .ok_or_else(|| Error::BadParams(format!("parameter `{key}` must be a boolean")))
}

pub(crate) fn get_vec(p: &Params, key: &str) -> Result<DVector<f64>> {
    let bad = || Error::BadParams(format!("parameter `{key}` must be an array of numbers"));
    let arr = p.get(key).and_then(Value::as_array).ok_or_else(bad)?;
    let xs: Option<Vec<f64>> = arr.iter().map(Value::as_f64).collect();
    Ok(DVector::from_vec(xs.ok_or_else(bad)?))
}

pub(crate) fn get_vecs(p: &Params, key: &str) -> Result<Vec<DVector<f64>>> {
    let bad = || Error::BadParams(format!("parameter `{key}` must be an array of arrays"));
    let arr = p.get(key).and_then(Value::as_array).ok_or_else(bad)?;
    arr.iter()
        .map(|row| {
            let xs: Option<Vec<f64>> = row
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(Value::as_f64)
                .collect();
            xs.map(DVector::from_vec).ok_or_else(bad)
        })
        .collect()
}

/// Parameter schema `name → JSON type` of every model, for listings.
pub fn schemas() -> BTreeMap<&'static str, BTreeMap<String, &'static str>> {
    registry()
        .into_iter()
        .map(|d| {
            let schema = d
                .defaults
                .iter()
                .map(|(k, v)| {
                    let t = match v {
                        Value::Bool(_) => "bool",
                        Value::Number(n) if n.is_u64() => "integer",
                        Value::Number(_) => "number",
                        Value::Array(_) => "array",
                        _ => "value",
                    };
                    (k.clone(), t)
                })
                .collect();
            (d.name, schema)
        })
        .collect()
}

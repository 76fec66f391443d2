//! Manifolds given by per-point charts, tangent representatives, retractions
//! and linearizing maps.
//!
//! Points are stored in ambient coordinates. A tangent vector is a coordinate
//! vector tied to a chart; re-expressing it in another chart at the same
//! center multiplies by the Jacobian of the chart transition.

mod charts;
mod manifolds;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cones::PolyhedralCone;
use crate::numdiff;
use crate::{Error, Result};

pub use charts::{
    AffineChart, LinearChart, ProductChart, ScaledChart, SphereChart, SphereChartKind,
};
pub use manifolds::{sphere_frame, Euclidean, ProductManifold, Sphere};

/// A point in ambient coordinates.
pub type Point = DVector<f64>;

/// Round-trip tolerance expected of every chart.
pub const TOL_CHART: f64 = 1e-10;

/// A chart centered at a point: `forward(center) = 0`.
pub trait Chart: Send + Sync + fmt::Debug {
    /// Identifier of the chart family (shared by all centers).
    fn id(&self) -> String;
    fn center(&self) -> &Point;
    fn dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    /// Radius of the coordinate ball on which the chart is defined.
    fn radius(&self) -> f64;
    fn forward(&self, p: &Point) -> Result<DVector<f64>>;
    fn inverse(&self, x: &DVector<f64>) -> Result<Point>;

    /// Jacobian of `inverse` at `x` (ambient × dim).
    fn inverse_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        numdiff::jacobian(|y| self.inverse(y), x, numdiff::FD_STEP)
    }

    /// Jacobian of `forward` at `p`, acting on ambient tangent vectors (dim × ambient).
    fn forward_jacobian(&self, p: &Point) -> Result<DMatrix<f64>> {
        let x = self.forward(p)?;
        Ok(crate::linalg::pinv(&self.inverse_jacobian(&x)?))
    }

    /// Differential of the parametrization at `x`; alias of [`Chart::inverse_jacobian`].
    fn differential_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.inverse_jacobian(x)
    }
}

pub fn check_ball(x: &DVector<f64>, radius: f64) -> Result<()> {
    let r = x.norm();
    if !r.is_finite() || r >= radius {
        return Err(Error::Domain(format!(
            "coordinates of norm {r:.4e} outside chart ball of radius {radius:.4e}"
        )));
    }
    Ok(())
}

/// A manifold described by chart and retraction suppliers.
pub trait Manifold: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn contains(&self, p: &Point, tol: f64) -> bool;
    /// Nearest valid point (used to sanitize user input).
    fn project(&self, p: &Point) -> Point;
    /// Names of the chart variants; variant 0 is the primary chart.
    fn chart_names(&self) -> Vec<String>;
    fn chart(&self, p: &Point, variant: usize) -> Result<Arc<dyn Chart>>;
    /// Names of the retraction variants, expressed in primary-chart tangent coordinates.
    fn retraction_names(&self) -> Vec<String>;
    fn retraction(&self, p: &Point, variant: usize) -> Result<Retraction>;
}

/// Coordinate representative of a tangent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    pub base: Point,
    pub chart_id: String,
    pub rep: DVector<f64>,
}

impl TangentVec {
    pub fn new(chart: &dyn Chart, rep: DVector<f64>) -> Self {
        Self {
            base: chart.center().clone(),
            chart_id: chart.id(),
            rep,
        }
    }
}

/// Transition `c2 ∘ c1⁻¹` evaluated at `x`.
pub fn chart_transition(c1: &dyn Chart, c2: &dyn Chart, x: &DVector<f64>) -> Result<DVector<f64>> {
    c2.forward(&c1.inverse(x)?)
}

/// Jacobian of `c2 ∘ c1⁻¹` at the origin of `c1`.
pub fn transition_jacobian(c1: &dyn Chart, c2: &dyn Chart) -> Result<DMatrix<f64>> {
    let x0 = DVector::zeros(c1.dim());
    let p = c1.inverse(&x0)?;
    Ok(c2.forward_jacobian(&p)? * c1.inverse_jacobian(&x0)?)
}

/// Re-express a tangent representative from `c1` into `c2`.
pub fn push_tangent(c1: &dyn Chart, c2: &dyn Chart, v: &TangentVec) -> Result<TangentVec> {
    let same_base = (&v.base - c1.center()).norm() <= 1e-9 * (1.0 + v.base.norm());
    if v.chart_id != c1.id() || !same_base {
        return Err(Error::ChartMismatch {
            expected: c1.id(),
            found: v.chart_id.clone(),
        });
    }
    if v.rep.len() != c1.dim() {
        return Err(Error::DimensionMismatch {
            expected: c1.dim(),
            got: v.rep.len(),
        });
    }
    let j = transition_jacobian(c1, c2)?;
    Ok(TangentVec {
        base: c2.center().clone(),
        chart_id: c2.id(),
        rep: j * &v.rep,
    })
}

type VecMap = Arc<dyn Fn(&DVector<f64>) -> Result<Point> + Send + Sync>;
type PointMap = Arc<dyn Fn(&Point) -> Result<DVector<f64>> + Send + Sync>;

/// Local retraction `R_p : T_pM ⊃ V → M`, in primary-chart tangent coordinates.
#[derive(Clone)]
pub struct Retraction {
    pub name: String,
    pub base: Point,
    pub domain_radius: f64,
    map: VecMap,
}

impl fmt::Debug for Retraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Retraction")
            .field("name", &self.name)
            .field("base", &self.base.as_slice())
            .field("domain_radius", &self.domain_radius)
            .finish()
    }
}

impl Retraction {
    pub fn new<F>(name: impl Into<String>, base: Point, domain_radius: f64, map: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<Point> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            base,
            domain_radius,
            map: Arc::new(map),
        }
    }

    /// Retraction given by the inverse of a chart centered at the base point.
    pub fn from_chart(name: impl Into<String>, chart: Arc<dyn Chart>) -> Self {
        let base = chart.center().clone();
        let radius = chart.radius();
        Self::new(name, base, radius, move |v| chart.inverse(v))
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<Point> {
        check_ball(v, self.domain_radius)?;
        (self.map)(v)
    }
}

/// `retract(r, v)`: evaluate a retraction with its domain guard.
pub fn retract(r: &Retraction, v: &DVector<f64>) -> Result<Point> {
    r.apply(v)
}

/// Local linearizing map `S_q : N ⊃ U → T_qN`.
#[derive(Clone)]
pub struct LinearizingMap {
    pub name: String,
    pub base: Point,
    pub adapted_to: Option<PolyhedralCone>,
    map: PointMap,
    inverse: Option<VecMap>,
}

impl fmt::Debug for LinearizingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearizingMap")
            .field("name", &self.name)
            .field("base", &self.base.as_slice())
            .field("adapted", &self.adapted_to.is_some())
            .finish()
    }
}

impl LinearizingMap {
    pub fn new<F>(name: impl Into<String>, base: Point, map: F) -> Self
    where
        F: Fn(&Point) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            base,
            adapted_to: None,
            map: Arc::new(map),
            inverse: None,
        }
    }

    pub fn with_inverse<F>(mut self, inverse: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<Point> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn adapted(mut self, cone: PolyhedralCone) -> Self {
        self.adapted_to = Some(cone);
        self
    }

    /// `S = J⁻¹ ∘ chart` with `J = D(chart ∘ reference⁻¹)(0)`, so that the
    /// differential is the identity in `reference` coordinates.
    pub fn from_chart(
        name: impl Into<String>,
        chart: Arc<dyn Chart>,
        reference: &dyn Chart,
    ) -> Result<Self> {
        let j = transition_jacobian(reference, chart.as_ref())?;
        let jinv = j
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular chart transition".into()))?;
        let base = chart.center().clone();
        let fwd = chart.clone();
        let inv = chart;
        Ok(Self::new(name, base, move |y| Ok(&jinv * fwd.forward(y)?))
            .with_inverse(move |s| inv.inverse(&(&j * s))))
    }

    pub fn apply(&self, y: &Point) -> Result<DVector<f64>> {
        (self.map)(y)
    }

    pub fn apply_inverse(&self, s: &DVector<f64>) -> Result<Point> {
        match &self.inverse {
            Some(inv) => inv(s),
            None => Err(Error::Domain(format!(
                "linearizing map `{}` has no inverse",
                self.name
            ))),
        }
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }
}

/// Outcome of [`axiom_check_retraction`] / [`axiom_check_linmap`].
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub value_residual: f64,
    pub differential_residual: f64,
    pub pass: bool,
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    crate::linalg::singular_values(a)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Checks `R(0) = p` and `D(φ ∘ R)(0) = I` with `φ` the reference chart at `p`.
pub fn axiom_check_retraction(
    r: &Retraction,
    reference: &dyn Chart,
    h: f64,
    tol: f64,
) -> Result<AxiomReport> {
    let dim = reference.dim();
    let zero = DVector::zeros(dim);
    let value_residual = (r.apply(&zero)? - &r.base).norm();
    let d = numdiff::jacobian(|v| reference.forward(&r.apply(v)?), &zero, h)?;
    let differential_residual = spectral_norm(&(d - DMatrix::identity(dim, dim)));
    Ok(AxiomReport {
        value_residual,
        differential_residual,
        pass: value_residual <= tol && differential_residual <= tol,
    })
}

/// Checks `S(q) = 0` and `D(S ∘ ψ⁻¹)(0) = I` with `ψ` the reference chart at `q`.
pub fn axiom_check_linmap(
    s: &LinearizingMap,
    reference: &dyn Chart,
    h: f64,
    tol: f64,
) -> Result<AxiomReport> {
    let dim = reference.dim();
    let zero = DVector::zeros(dim);
    let value_residual = s.apply(&s.base)?.norm();
    let d = numdiff::jacobian(|x| s.apply(&reference.inverse(x)?), &zero, h)?;
    let differential_residual = spectral_norm(&(d - DMatrix::identity(dim, dim)));
    Ok(AxiomReport {
        value_residual,
        differential_residual,
        pass: value_residual <= tol && differential_residual <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transition_identity_and_rotation() {
        let e = Euclidean::new(2);
        let p = DVector::from_vec(vec![1.0, -2.0]);
        let c1 = e.chart(&p, 0).unwrap();
        let c2 = e.chart(&p, 1).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.4]);
        let same = chart_transition(c1.as_ref(), c1.as_ref(), &x).unwrap();
        assert!((same - &x).norm() < 1e-15);
        let rot = chart_transition(c1.as_ref(), c2.as_ref(), &x).unwrap();
        let q = Euclidean::rotation(2);
        assert!((rot - &q * &x).norm() < 1e-14);
        let v = TangentVec::new(c1.as_ref(), DVector::from_vec(vec![1.0, 0.0]));
        let w = push_tangent(c1.as_ref(), c2.as_ref(), &v).unwrap();
        assert!((w.rep - q.column(0)).norm() < 1e-14);
    }

    #[test]
    fn push_tangent_rejects_foreign_chart() {
        let s = Sphere::new(2);
        let p = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let c1 = s.chart(&p, 0).unwrap();
        let c2 = s.chart(&p, 1).unwrap();
        let v = TangentVec::new(c2.as_ref(), DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(
            push_tangent(c1.as_ref(), c2.as_ref(), &v),
            Err(Error::ChartMismatch { .. })
        ));
    }

    #[test]
    fn exp_retraction_quarter_circle() {
        let s = Sphere::new(2);
        let p = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let r = s.retraction(&p, 0).unwrap();
        let v = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let q = retract(&r, &v).unwrap();
        assert_relative_eq!(q.dot(&p), 0.0, epsilon = 1e-14);
        assert_relative_eq!(q.norm(), 1.0, epsilon = 1e-14);
        assert_eq!(retract(&r, &DVector::zeros(2)).unwrap(), p);
    }

    #[test]
    fn scaled_map_fails_axiom() {
        let e = Euclidean::new(2);
        let p = DVector::from_vec(vec![0.5, 0.5]);
        let chart = e.chart(&p, 0).unwrap();
        let base = p.clone();
        let r = Retraction::new("double", p.clone(), f64::INFINITY, move |v| {
            Ok(&base + v * 2.0)
        });
        let rep = axiom_check_retraction(&r, chart.as_ref(), 1e-5, 1e-6).unwrap();
        assert!(!rep.pass);
        assert_relative_eq!(rep.differential_residual, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn retraction_domain_guard() {
        let s = Sphere::new(2);
        let p = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let r = s.retraction(&p, 0).unwrap();
        let big = DVector::from_vec(vec![10.0, 0.0]);
        assert!(matches!(retract(&r, &big), Err(Error::Domain(_))));
    }
}

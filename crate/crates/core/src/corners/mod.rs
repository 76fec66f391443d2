//! Submanifolds with corners described by adapted charts.
//!
//! At `q ∈ K` an adapted chart `ψ` with `ψ(q) = 0` maps `K ∩ U` onto
//! `{x : Â x_{1..k} ≤ 0, x_{k+1..n} = 0}` with `Â` surjective.

mod sets;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cones::PolyhedralCone;
use crate::geometry::{Chart, LinearChart, Manifold, Point, ScaledChart};
use crate::linalg;
use crate::{Error, Result};

pub use sets::{
    ConeSet, Diagonal, DiagonalChart, ProductSet, Sign, SignPattern, SphericalPolygon, Whole,
};

/// Membership tolerance for points of `K`.
pub const TOL_FEAS: f64 = 1e-9;

/// Tolerance under which a constraint of a built-in set counts as active.
pub const ACTIVE_TOL: f64 = 1e-8;

/// Local corner description `(n, k, ℓ, Â)` together with the adapted chart.
#[derive(Debug, Clone)]
pub struct AdaptedChartData {
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub a_hat: DMatrix<f64>,
    pub chart: Arc<dyn Chart>,
    /// Radius (in chart coordinates) of the ball on which the description holds.
    pub radius: f64,
}

impl AdaptedChartData {
    /// `A = [Â 0]`, ℓ × n.
    pub fn a_rows(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.ell, self.n);
        if self.ell > 0 && self.k > 0 {
            a.view_mut((0, 0), (self.ell, self.k))
                .copy_from(&self.a_hat);
        }
        a
    }

    /// `W` selecting the last `n − k` coordinates.
    pub fn w_rows(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n - self.k, self.n);
        for i in 0..(self.n - self.k) {
            w[(i, self.k + i)] = 1.0;
        }
        w
    }

    pub fn inner_cone(&self) -> PolyhedralCone {
        PolyhedralCone {
            dim: self.n,
            a_i: self.a_rows(),
            a_e: self.w_rows(),
        }
    }

    /// Canonical membership `Â x_{1..k} ≤ tol`, `|x_{k+1..n}| ≤ tol`.
    pub fn contains_coords(&self, x: &DVector<f64>, tol: f64) -> bool {
        let ineq = (self.a_rows() * x).iter().all(|&v| v <= tol);
        let eq = x
            .rows(self.k, self.n - self.k)
            .iter()
            .all(|v| v.abs() <= tol);
        ineq && eq
    }

    /// Recoordinatize by an invertible `k × k` map on the `K` block.
    pub fn reparametrize(&self, id: &str, l_k: &DMatrix<f64>) -> Result<Self> {
        let mut m = DMatrix::identity(self.n, self.n);
        m.view_mut((0, 0), (self.k, self.k)).copy_from(l_k);
        let lkinv = l_k
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::BadParams("singular reparametrization".into()))?;
        let smax = linalg::singular_values(&m.clone().try_inverse().expect("invertible"))
            .into_iter()
            .fold(0.0, f64::max);
        let chart = LinearChart::new(id, self.chart.clone(), m)?;
        Ok(Self {
            n: self.n,
            k: self.k,
            ell: self.ell,
            a_hat: &self.a_hat * lkinv,
            chart: Arc::new(chart),
            radius: self.radius / smax,
        })
    }

    /// Wrap the chart in a [`ScaledChart`]; the corner description is unchanged.
    pub fn scaled(&self) -> Self {
        let sc = ScaledChart::new(self.chart.clone());
        let r = self.radius.min(1.0).min(self.chart.radius());
        let radius = ScaledChart::DEFAULT_D * r * (-ScaledChart::DEFAULT_BETA * r).exp();
        Self {
            n: self.n,
            k: self.k,
            ell: self.ell,
            a_hat: self.a_hat.clone(),
            radius: radius.min(sc.radius()),
            chart: Arc::new(sc),
        }
    }
}

/// Bidiagonal shear used for the alternate adapted chart.
pub(crate) fn shear(k: usize) -> DMatrix<f64> {
    let mut l = DMatrix::identity(k, k);
    for i in 0..k.saturating_sub(1) {
        l[(i, i + 1)] = 0.4;
    }
    for i in 0..k {
        l[(i, i)] = 1.0 + 0.25 * i as f64;
    }
    l
}

/// A submanifold with corners `K ⊂ N`.
pub trait CornerSet: Send + Sync + std::fmt::Debug {
    fn name(&self) -> String;
    fn ambient(&self) -> Arc<dyn Manifold>;
    fn dim_k(&self) -> usize;
    fn contains(&self, q: &Point, tol: f64) -> bool;

    /// The primary adapted chart at `q`.
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData>;

    /// A second adapted chart at `q`; by default a linear reparametrization.
    fn alternate_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        let data = self.primary_chart(q)?;
        let id = format!("sheared[{}]", data.chart.id());
        data.reparametrize(&id, &shear(data.k))
    }

    fn adapted_variant_names(&self) -> Vec<String> {
        vec!["primary".into(), "alternate".into(), "scaled".into()]
    }

    /// Adapted chart by variant: 0 primary, 1 alternate, 2 radially rescaled primary.
    fn adapted_chart(&self, q: &Point, variant: usize) -> Result<AdaptedChartData> {
        if !self.contains(q, TOL_FEAS) {
            return Err(Error::NotInSet);
        }
        match variant {
            0 => self.primary_chart(q),
            1 => self.alternate_chart(q),
            2 => Ok(self.primary_chart(q)?.scaled()),
            v => Err(Error::IndexOutOfRange(v, 3)),
        }
    }

    /// Nonnegative constraint violation, zero exactly on `K`.
    fn violation(&self, y: &Point) -> f64;

    /// A point of `K` near `y` at which constraints with slack below `eps` are active.
    fn anchor(&self, y: &Point, _eps: f64) -> Result<Point> {
        if self.contains(y, TOL_FEAS) {
            Ok(y.clone())
        } else {
            Err(Error::NotInSet)
        }
    }

    /// A global description `c_I(y) ≤ 0`, `c_E(y) = 0` that does not use adapted charts.
    fn constraint_functions(&self, y: &Point) -> (Vec<f64>, Vec<f64>);

    /// Downcast hook for classical sign-pattern sets.
    fn as_sign_pattern(&self) -> Option<&SignPattern> {
        None
    }
}

/// Corner index `ℓ` at `q`.
pub fn corner_index(k: &dyn CornerSet, q: &Point) -> Result<usize> {
    Ok(k.adapted_chart(q, 0)?.ell)
}

/// Inner tangent cone in the coordinates of the primary adapted chart.
pub fn inner_tangent_cone(k: &dyn CornerSet, q: &Point) -> Result<PolyhedralCone> {
    Ok(k.adapted_chart(q, 0)?.inner_cone())
}

/// Orthonormal basis of `{v : Â v = 0, W v = 0}`, of dimension `k − ℓ`.
pub fn zero_tangent_space(k: &dyn CornerSet, q: &Point) -> Result<DMatrix<f64>> {
    let data = k.adapted_chart(q, 0)?;
    Ok(linalg::null_space(
        &linalg::vstack(&data.a_rows(), &data.w_rows()),
        data.n,
    ))
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub rank_a_hat: usize,
    pub samples: usize,
    pub mismatches: usize,
}

/// Check surjectivity of `Â`, `ℓ ≤ k`, centering, and the chart description by sampling.
pub fn validate(set: &dyn CornerSet, q: &Point, tol: f64) -> Result<ValidationReport> {
    validate_variant(set, q, 0, tol)
}

pub fn validate_variant(
    set: &dyn CornerSet,
    q: &Point,
    variant: usize,
    tol: f64,
) -> Result<ValidationReport> {
    let data = set.adapted_chart(q, variant)?;
    if data.ell > data.k || data.k > data.n {
        return Err(Error::ValidationFailure(format!(
            "index bounds violated: need ℓ ≤ k ≤ n, got ℓ = {}, k = {}, n = {}",
            data.ell, data.k, data.n
        )));
    }
    let rank_a_hat = linalg::rank(&data.a_hat);
    if rank_a_hat != data.ell {
        return Err(Error::ValidationFailure(format!(
            "surjectivity: rank(Â) = {rank_a_hat} < ℓ = {}",
            data.ell
        )));
    }
    let x0 = data.chart.forward(q)?;
    if x0.norm() > 1e-9 {
        return Err(Error::ValidationFailure(format!(
            "chart not centered: |ψ(q)| = {:.3e}",
            x0.norm()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let r = 0.5 * data.radius.min(data.chart.radius()).min(1.0);
    let samples = 200;
    let mut mismatches = 0;
    for s in 0..samples {
        let mut x = DVector::from_fn(data.n, |_, _| rng.gen_range(-1.0..1.0));
        if s % 2 == 0 {
            for i in data.k..data.n {
                x[i] = 0.0;
            }
        }
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        let x = x * (r * rng.gen_range(0.05..1.0) / norm);
        let ax: DVector<f64> = data.a_rows() * &x;
        let canonical_val = ax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let near_boundary = canonical_val.abs() < 1e-6 * r && data.ell > 0;
        if near_boundary {
            continue;
        }
        let p = data.chart.inverse(&x)?;
        if set.contains(&p, tol) != data.contains_coords(&x, tol) {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(Error::ValidationFailure(format!(
            "membership disagrees with the chart description on {mismatches} of {samples} samples"
        )));
    }
    Ok(ValidationReport {
        n: data.n,
        k: data.k,
        ell: data.ell,
        rank_a_hat,
        samples,
        mismatches,
    })
}

//! Problem instances `min f(p) s.t. g(p) ∈ K` and their local coordinate models.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::corners::{AdaptedChartData, CornerSet, TOL_FEAS};
use crate::geometry::{Chart, Manifold, Point};
use crate::numdiff;
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type MapFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
pub type JacFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// `min f(p)` over `p ∈ M` subject to `g(p) ∈ K ⊂ N`.
#[derive(Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub m: Arc<dyn Manifold>,
    pub n: Arc<dyn Manifold>,
    pub k: Arc<dyn CornerSet>,
    pub f: ScalarFn,
    pub g: MapFn,
    /// Ambient gradient of `f`, if known.
    pub f_grad: Option<GradFn>,
    /// Ambient Jacobian of `g` (ambient N × ambient M), if known.
    pub g_jac: Option<JacFn>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("M", &self.m.name())
            .field("N", &self.n.name())
            .field("K", &self.k.name())
            .field("analytic", &(self.f_grad.is_some(), self.g_jac.is_some()))
            .finish()
    }
}

impl ProblemInstance {
    pub fn new<F, G>(
        name: impl Into<String>,
        m: Arc<dyn Manifold>,
        n: Arc<dyn Manifold>,
        k: Arc<dyn CornerSet>,
        f: F,
        g: G,
    ) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
        G: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            m,
            n,
            k,
            f: Arc::new(f),
            g: Arc::new(g),
            f_grad: None,
            g_jac: None,
        }
    }

    pub fn with_derivatives<DF, DG>(mut self, f_grad: DF, g_jac: DG) -> Self
    where
        DF: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
        DG: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.f_grad = Some(Arc::new(f_grad));
        self.g_jac = Some(Arc::new(g_jac));
        self
    }

    /// Copy without analytic derivatives, forcing finite differences.
    pub fn without_derivatives(&self) -> Self {
        Self {
            f_grad: None,
            g_jac: None,
            ..self.clone()
        }
    }

    pub fn eval_f(&self, p: &Point) -> f64 {
        (self.f)(p)
    }

    pub fn eval_g(&self, p: &Point) -> Point {
        (self.g)(p)
    }

    pub fn is_feasible(&self, p: &Point, tol: f64) -> bool {
        self.k.contains(&self.eval_g(p), tol)
    }

    pub fn ensure_feasible(&self, p: &Point) -> Result<Point> {
        if p.len() != self.m.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.m.ambient_dim(),
                got: p.len(),
            });
        }
        let q = self.eval_g(p);
        if !self.k.contains(&q, TOL_FEAS) {
            return Err(Error::InfeasiblePoint);
        }
        Ok(q)
    }
}

/// Which chart of `M`, retraction of `M` and adapted chart of `K` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rep {
    pub chart: usize,
    pub retraction: usize,
    pub adapted: usize,
}

impl Rep {
    pub fn new(chart: usize, retraction: usize, adapted: usize) -> Self {
        Self {
            chart,
            retraction,
            adapted,
        }
    }
}

/// First-order data of a problem at `p` in a chart `φ` of `M` and an adapted chart `ψ` of `K` at `q`.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub p: Point,
    pub q: Point,
    pub rep: Rep,
    pub phi: Arc<dyn Chart>,
    pub data: AdaptedChartData,
    pub f0: f64,
    /// `f'_φ(0)`, length `m`.
    pub f_prime: DVector<f64>,
    /// `g'_{ψφ}(0)`, `n × m`.
    pub g_prime: DMatrix<f64>,
    /// `ψ(g(p))`; zero when `q = g(p)`.
    pub g_bar0: DVector<f64>,
}

impl LocalModel {
    /// Local model at a feasible point, with the adapted chart centered at `g(p)`.
    pub fn at(prob: &ProblemInstance, p: &Point, rep: Rep) -> Result<Self> {
        let q = prob.ensure_feasible(p)?;
        Self::anchored(prob, p, &q, rep)
    }

    /// Local model with the adapted chart centered at an arbitrary `q ∈ K`.
    pub fn anchored(prob: &ProblemInstance, p: &Point, q: &Point, rep: Rep) -> Result<Self> {
        let phi = prob.m.chart(p, rep.chart)?;
        let data = prob.k.adapted_chart(q, rep.adapted)?;
        let gp = prob.eval_g(p);
        let g_bar0 = data.chart.forward(&gp)?;
        let x0 = DVector::zeros(phi.dim());
        let f_prime = match &prob.f_grad {
            Some(df) => phi.inverse_jacobian(&x0)?.transpose() * df(p),
            None => {
                numdiff::gradient(|x| Ok(prob.eval_f(&phi.inverse(x)?)), &x0, numdiff::FD_STEP)?
            }
        };
        let g_prime = match &prob.g_jac {
            Some(dg) => data.chart.forward_jacobian(&gp)? * dg(p) * phi.inverse_jacobian(&x0)?,
            None => numdiff::jacobian(
                |x| data.chart.forward(&prob.eval_g(&phi.inverse(x)?)),
                &x0,
                numdiff::FD_STEP,
            )?,
        };
        Ok(Self {
            p: p.clone(),
            q: q.clone(),
            rep,
            phi,
            f0: prob.eval_f(p),
            data,
            f_prime,
            g_prime,
            g_bar0,
        })
    }

    pub fn dim_m(&self) -> usize {
        self.f_prime.len()
    }

    /// `A g'` (ℓ × m).
    pub fn a_gprime(&self) -> DMatrix<f64> {
        self.data.a_rows() * &self.g_prime
    }

    /// `W g'` ((n − k) × m).
    pub fn w_gprime(&self) -> DMatrix<f64> {
        self.data.w_rows() * &self.g_prime
    }

    /// Linearizing cone `{v : A g' v ≤ 0, W g' v = 0}` in `φ` coordinates.
    pub fn linearizing_cone(&self) -> Result<crate::cones::PolyhedralCone> {
        crate::cones::PolyhedralCone::with_dim(self.dim_m(), self.a_gprime(), self.w_gprime())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corners::SignPattern;
    use crate::geometry::{Euclidean, Sphere};

    fn sphere_problem() -> ProblemInstance {
        let s2: Arc<dyn Manifold> = Arc::new(Sphere::new(2));
        let t = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        let t2 = t.clone();
        ProblemInstance::new(
            "s",
            s2.clone(),
            Arc::new(Euclidean::new(3)),
            Arc::new(SignPattern::new(vec![crate::corners::Sign::Free; 3])),
            move |p| -p.dot(&t),
            |p| p.clone(),
        )
        .with_derivatives(move |_| -t2.clone(), |_| DMatrix::identity(3, 3))
    }

    #[test]
    fn analytic_and_fd_local_models_agree() {
        let prob = sphere_problem();
        let p = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        for chart in 0..4 {
            let rep = Rep::new(chart, 0, 0);
            let a = LocalModel::at(&prob, &p, rep).unwrap();
            let b = LocalModel::at(&prob.without_derivatives(), &p, rep).unwrap();
            assert!((&a.f_prime - &b.f_prime).norm() < 1e-8, "chart {chart}");
            assert!((&a.g_prime - &b.g_prime).norm() < 1e-8, "chart {chart}");
            assert!(a.g_bar0.norm() < 1e-12);
        }
    }

    #[test]
    fn infeasible_point_rejected() {
        let prob = ProblemInstance::new(
            "h",
            Arc::new(Euclidean::new(2)),
            Arc::new(Euclidean::new(2)),
            Arc::new(SignPattern::classical(1, 1)),
            |p| p[0],
            |p| p.clone(),
        );
        let bad = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            LocalModel::at(&prob, &bad, Rep::default()),
            Err(Error::InfeasiblePoint)
        ));
        let good = DVector::from_vec(vec![-1.0, 0.0]);
        let lm = LocalModel::at(&prob, &good, Rep::default()).unwrap();
        assert_eq!(lm.data.ell, 0);
        assert_eq!(lm.w_gprime().nrows(), 1);
    }
}

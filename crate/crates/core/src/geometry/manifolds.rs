use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    AffineChart, Chart, Manifold, Point, ProductChart, Retraction, SphereChart, SphereChartKind,
};
use crate::{Error, Result};

/// Euclidean space `R^n` with translation and rotated charts.
#[derive(Debug, Clone)]
pub struct Euclidean {
    n: usize,
}

impl Euclidean {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Fixed orthogonal matrix: Givens rotations by 0.3 rad on consecutive coordinate pairs.
    pub fn rotation(n: usize) -> DMatrix<f64> {
        let mut q = DMatrix::identity(n, n);
        let (s, c) = 0.3f64.sin_cos();
        for i in 0..n.saturating_sub(1) {
            let mut g = DMatrix::identity(n, n);
            g[(i, i)] = c;
            g[(i, i + 1)] = -s;
            g[(i + 1, i)] = s;
            g[(i + 1, i + 1)] = c;
            q = g * q;
        }
        q
    }

    fn quadratic_direction(&self) -> DVector<f64> {
        DVector::from_element(self.n, 1.0 / (self.n.max(1) as f64).sqrt())
    }
}

impl Manifold for Euclidean {
    fn name(&self) -> String {
        format!("R^{}", self.n)
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn ambient_dim(&self) -> usize {
        self.n
    }
    fn contains(&self, p: &Point, _tol: f64) -> bool {
        p.len() == self.n && p.iter().all(|x| x.is_finite())
    }
    fn project(&self, p: &Point) -> Point {
        p.clone()
    }
    fn chart_names(&self) -> Vec<String> {
        vec!["translation".into(), "rotated".into()]
    }
    fn chart(&self, p: &Point, variant: usize) -> Result<Arc<dyn Chart>> {
        let q = match variant {
            0 => DMatrix::identity(self.n, self.n),
            1 => Self::rotation(self.n),
            v => return Err(Error::IndexOutOfRange(v, 2)),
        };
        let b = q.transpose();
        let id = format!("euclidean/{}", self.chart_names()[variant]);
        Ok(Arc::new(AffineChart::new(
            id,
            p.clone(),
            q,
            b,
            f64::INFINITY,
        )))
    }
    fn retraction_names(&self) -> Vec<String> {
        vec!["translation".into(), "quadratic".into()]
    }
    fn retraction(&self, p: &Point, variant: usize) -> Result<Retraction> {
        let base = p.clone();
        match variant {
            0 => Ok(Retraction::new(
                "translation",
                p.clone(),
                f64::INFINITY,
                move |v| Ok(&base + v),
            )),
            1 => {
                let w = self.quadratic_direction();
                Ok(Retraction::new(
                    "quadratic",
                    p.clone(),
                    f64::INFINITY,
                    move |v| Ok(&base + v + &w * (0.5 * v.norm_squared())),
                ))
            }
            v => Err(Error::IndexOutOfRange(v, 2)),
        }
    }
}

/// Orthonormal basis of `p^⊥` for a unit vector `p`.
///
/// For the circle the positively oriented frame `(−p₂, p₁)` is used; in
/// higher dimensions the frame comes from a Householder reflection mapping
/// the last basis vector to `∓p`.
pub fn sphere_frame(p: &Point) -> DMatrix<f64> {
    let m = p.len();
    if m == 2 {
        return DMatrix::from_column_slice(2, 1, &[-p[1], p[0]]);
    }
    let s = if p[m - 1] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = p.clone();
    u[m - 1] += s;
    let h = DMatrix::identity(m, m) - (&u * u.transpose()) * (2.0 / u.norm_squared());
    h.columns(0, m - 1).into_owned()
}

/// Unit sphere `S^d ⊂ R^{d+1}`.
#[derive(Debug, Clone)]
pub struct Sphere {
    d: usize,
}

impl Sphere {
    pub fn new(d: usize) -> Self {
        Self { d }
    }

    pub fn chart_of(&self, p: &Point, kind: SphereChartKind) -> SphereChart {
        SphereChart::new(kind, p.clone(), sphere_frame(p))
    }
}

impl Manifold for Sphere {
    fn name(&self) -> String {
        format!("S^{}", self.d)
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn ambient_dim(&self) -> usize {
        self.d + 1
    }
    fn contains(&self, p: &Point, tol: f64) -> bool {
        p.len() == self.d + 1 && (p.norm() - 1.0).abs() <= tol
    }
    fn project(&self, p: &Point) -> Point {
        p.normalize()
    }
    fn chart_names(&self) -> Vec<String> {
        SphereChartKind::ALL
            .iter()
            .map(|k| k.name().to_string())
            .collect()
    }
    fn chart(&self, p: &Point, variant: usize) -> Result<Arc<dyn Chart>> {
        let kind = *SphereChartKind::ALL
            .get(variant)
            .ok_or(Error::IndexOutOfRange(variant, 4))?;
        Ok(Arc::new(self.chart_of(p, kind)))
    }
    fn retraction_names(&self) -> Vec<String> {
        vec!["exponential".into(), "projection".into()]
    }
    fn retraction(&self, p: &Point, variant: usize) -> Result<Retraction> {
        match variant {
            0 => Ok(Retraction::from_chart(
                "exponential",
                Arc::new(self.chart_of(p, SphereChartKind::Normal)),
            )),
            1 => Ok(Retraction::from_chart(
                "projection",
                Arc::new(self.chart_of(p, SphereChartKind::Gnomonic)),
            )),
            v => Err(Error::IndexOutOfRange(v, 2)),
        }
    }
}

/// Cartesian product of manifolds; points are concatenated ambient vectors.
#[derive(Debug, Clone)]
pub struct ProductManifold {
    factors: Vec<Arc<dyn Manifold>>,
}

impl ProductManifold {
    pub fn new(factors: Vec<Arc<dyn Manifold>>) -> Self {
        Self { factors }
    }

    pub fn factors(&self) -> &[Arc<dyn Manifold>] {
        &self.factors
    }

    /// Split a point into its factor components.
    pub fn split(&self, p: &Point) -> Vec<Point> {
        let mut off = 0;
        self.factors
            .iter()
            .map(|m| {
                let a = m.ambient_dim();
                let part = p.rows(off, a).into_owned();
                off += a;
                part
            })
            .collect()
    }

    fn variants(counts: impl Iterator<Item = usize>) -> usize {
        counts.max().unwrap_or(1)
    }
}

impl Manifold for ProductManifold {
    fn name(&self) -> String {
        let names: Vec<String> = self.factors.iter().map(|m| m.name()).collect();
        names.join(" x ")
    }
    fn dim(&self) -> usize {
        self.factors.iter().map(|m| m.dim()).sum()
    }
    fn ambient_dim(&self) -> usize {
        self.factors.iter().map(|m| m.ambient_dim()).sum()
    }
    fn contains(&self, p: &Point, tol: f64) -> bool {
        p.len() == self.ambient_dim()
            && self
                .factors
                .iter()
                .zip(self.split(p))
                .all(|(m, q)| m.contains(&q, tol))
    }
    fn project(&self, p: &Point) -> Point {
        let parts: Vec<f64> = self
            .factors
            .iter()
            .zip(self.split(p))
            .flat_map(|(m, q)| m.project(&q).iter().copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(parts)
    }
    fn chart_names(&self) -> Vec<String> {
        let n = Self::variants(self.factors.iter().map(|m| m.chart_names().len()));
        (0..n).map(|i| format!("product-{i}")).collect()
    }
    fn chart(&self, p: &Point, variant: usize) -> Result<Arc<dyn Chart>> {
        let count = self.chart_names().len();
        if variant >= count {
            return Err(Error::IndexOutOfRange(variant, count));
        }
        let parts = self
            .factors
            .iter()
            .zip(self.split(p))
            .map(|(m, q)| m.chart(&q, variant % m.chart_names().len()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(ProductChart::new(parts)))
    }
    fn retraction_names(&self) -> Vec<String> {
        let n = Self::variants(self.factors.iter().map(|m| m.retraction_names().len()));
        (0..n).map(|i| format!("product-{i}")).collect()
    }
    fn retraction(&self, p: &Point, variant: usize) -> Result<Retraction> {
        let count = self.retraction_names().len();
        if variant >= count {
            return Err(Error::IndexOutOfRange(variant, count));
        }
        let parts = self
            .factors
            .iter()
            .zip(self.split(p))
            .map(|(m, q)| {
                Ok((
                    m.retraction(&q, variant % m.retraction_names().len())?,
                    m.dim(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let radius = parts
            .iter()
            .map(|(r, _)| r.domain_radius)
            .fold(f64::INFINITY, f64::min);
        Ok(Retraction::new(
            format!("product-{variant}"),
            p.clone(),
            radius,
            move |v| {
                let mut out = Vec::new();
                let mut off = 0;
                for (r, d) in &parts {
                    let q = r.apply(&v.rows(off, *d).into_owned())?;
                    out.extend_from_slice(q.as_slice());
                    off += d;
                }
                Ok(DVector::from_vec(out))
            },
        ))
    }
}

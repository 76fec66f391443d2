use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use super::{AdaptedChartData, CornerSet, ACTIVE_TOL};
use crate::geometry::{
    check_ball, sphere_frame, AffineChart, Chart, Euclidean, LinearChart, Manifold, Point,
    ProductChart, ProductManifold, Sphere, SphereChart, SphereChartKind,
};
use crate::linalg;
use crate::{Error, Result};

/// Per-coordinate constraint of a [`SignPattern`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    NonPos,
    Free,
    Zero,
}

/// `K = {y ∈ R^n : y_i ≤ 0 (NonPos), y_i = 0 (Zero)}`, e.g. `R^{n_I}_− × {0}^{n_E}`.
#[derive(Debug, Clone)]
pub struct SignPattern {
    signs: Vec<Sign>,
}

impl SignPattern {
    pub fn new(signs: Vec<Sign>) -> Self {
        Self { signs }
    }

    /// `R^{n_I}_− × {0}^{n_E}`.
    pub fn classical(n_i: usize, n_e: usize) -> Self {
        let mut signs = vec![Sign::NonPos; n_i];
        signs.extend(std::iter::repeat_n(Sign::Zero, n_e));
        Self { signs }
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    /// Coordinate order of the primary chart: active, inactive, free, zero.
    pub fn chart_order(&self, q: &Point) -> (Vec<usize>, usize) {
        let idx = |pred: &dyn Fn(usize) -> bool| {
            (0..self.signs.len())
                .filter(|&i| pred(i))
                .collect::<Vec<_>>()
        };
        let active = idx(&|i| self.signs[i] == Sign::NonPos && q[i].abs() <= ACTIVE_TOL);
        let inactive = idx(&|i| self.signs[i] == Sign::NonPos && q[i].abs() > ACTIVE_TOL);
        let free = idx(&|i| self.signs[i] == Sign::Free);
        let zero = idx(&|i| self.signs[i] == Sign::Zero);
        let ell = active.len();
        let mut order = active;
        order.extend(inactive);
        order.extend(free);
        order.extend(zero);
        (order, ell)
    }
}

impl CornerSet for SignPattern {
    fn name(&self) -> String {
        let s: String = self
            .signs
            .iter()
            .map(|s| match s {
                Sign::NonPos => '-',
                Sign::Free => '*',
                Sign::Zero => '0',
            })
            .collect();
        format!("sign-pattern[{s}]")
    }
    fn ambient(&self) -> Arc<dyn Manifold> {
        Arc::new(Euclidean::new(self.signs.len()))
    }
    fn dim_k(&self) -> usize {
        self.signs.iter().filter(|&&s| s != Sign::Zero).count()
    }
    fn contains(&self, q: &Point, tol: f64) -> bool {
        q.len() == self.signs.len()
            && self.signs.iter().zip(q.iter()).all(|(s, &x)| match s {
                Sign::NonPos => x <= tol,
                Sign::Free => x.is_finite(),
                Sign::Zero => x.abs() <= tol,
            })
    }
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        let n = self.signs.len();
        let (order, ell) = self.chart_order(q);
        let mut p = DMatrix::zeros(n, n);
        for (row, &i) in order.iter().enumerate() {
            p[(row, i)] = 1.0;
        }
        let k = self.dim_k();
        let mut a_hat = DMatrix::zeros(ell, k);
        for j in 0..ell {
            a_hat[(j, j)] = 1.0;
        }
        let radius = (0..n)
            .filter(|&i| self.signs[i] == Sign::NonPos && q[i].abs() > ACTIVE_TOL)
            .map(|i| q[i].abs())
            .fold(f64::INFINITY, f64::min);
        let chart = AffineChart::new(
            "sign-pattern",
            q.clone(),
            p.clone(),
            p.transpose(),
            f64::INFINITY,
        );
        Ok(AdaptedChartData {
            n,
            k,
            ell,
            a_hat,
            chart: Arc::new(chart),
            radius,
        })
    }
    fn violation(&self, y: &Point) -> f64 {
        self.signs
            .iter()
            .zip(y.iter())
            .map(|(s, &x)| match s {
                Sign::NonPos => x.max(0.0),
                Sign::Free => 0.0,
                Sign::Zero => x.abs(),
            })
            .sum()
    }
    fn anchor(&self, y: &Point, eps: f64) -> Result<Point> {
        Ok(DVector::from_iterator(
            y.len(),
            self.signs.iter().zip(y.iter()).map(|(s, &x)| match s {
                Sign::NonPos if x > -eps => 0.0,
                Sign::Zero => 0.0,
                _ => x,
            }),
        ))
    }
    fn constraint_functions(&self, y: &Point) -> (Vec<f64>, Vec<f64>) {
        let mut ineq = Vec::new();
        let mut eq = Vec::new();
        for (s, &x) in self.signs.iter().zip(y.iter()) {
            match s {
                Sign::NonPos => ineq.push(x),
                Sign::Zero => eq.push(x),
                Sign::Free => {}
            }
        }
        (ineq, eq)
    }
    fn as_sign_pattern(&self) -> Option<&SignPattern> {
        Some(self)
    }
}

/// Polyhedral cone `K = {y : A_I y ≤ 0, A_E y = 0}` in `R^n`, given globally.
#[derive(Debug, Clone)]
pub struct ConeSet {
    a_i: DMatrix<f64>,
    a_e: DMatrix<f64>,
    n: usize,
}

impl ConeSet {
    pub fn new(a_i: DMatrix<f64>, a_e: DMatrix<f64>) -> Result<Self> {
        let n = a_i.ncols().max(a_e.ncols());
        if (a_i.nrows() > 0 && a_i.ncols() != n) || (a_e.nrows() > 0 && a_e.ncols() != n) {
            return Err(Error::BadParams(
                "cone rows have inconsistent lengths".into(),
            ));
        }
        let a_i = if a_i.nrows() == 0 {
            DMatrix::zeros(0, n)
        } else {
            a_i
        };
        let a_e = if a_e.nrows() == 0 {
            DMatrix::zeros(0, n)
        } else {
            a_e
        };
        Ok(Self { a_i, a_e, n })
    }

    fn bases(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let zk = linalg::null_space(&self.a_e, self.n);
        let u = linalg::range_basis(&self.a_e.transpose());
        (zk, u)
    }
}

impl CornerSet for ConeSet {
    fn name(&self) -> String {
        format!(
            "cone[{}x{} | {}]",
            self.a_i.nrows(),
            self.n,
            self.a_e.nrows()
        )
    }
    fn ambient(&self) -> Arc<dyn Manifold> {
        Arc::new(Euclidean::new(self.n))
    }
    fn dim_k(&self) -> usize {
        self.n - linalg::rank(&self.a_e)
    }
    fn contains(&self, q: &Point, tol: f64) -> bool {
        q.len() == self.n
            && (&self.a_i * q).iter().all(|&x| x <= tol)
            && (&self.a_e * q).iter().all(|x| x.abs() <= tol)
    }
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        let (zk, u) = self.bases();
        let k = zk.ncols();
        let basis = linalg::hstack(&zk, &u);
        let vals = &self.a_i * q;
        let active: Vec<usize> = (0..self.a_i.nrows())
            .filter(|&j| vals[j].abs() <= ACTIVE_TOL)
            .collect();
        let a_hat = linalg::select_rows(&self.a_i, &active) * &zk;
        let radius = (0..self.a_i.nrows())
            .filter(|j| !active.contains(j))
            .map(|j| vals[j].abs() / self.a_i.row(j).norm())
            .fold(f64::INFINITY, f64::min);
        let chart = AffineChart::new(
            "cone-set",
            q.clone(),
            basis.transpose(),
            basis,
            f64::INFINITY,
        );
        Ok(AdaptedChartData {
            n: self.n,
            k,
            ell: active.len(),
            a_hat,
            chart: Arc::new(chart),
            radius,
        })
    }
    fn violation(&self, y: &Point) -> f64 {
        (&self.a_i * y).iter().map(|x| x.max(0.0)).sum::<f64>()
            + (&self.a_e * y).iter().map(|x| x.abs()).sum::<f64>()
    }
    fn constraint_functions(&self, y: &Point) -> (Vec<f64>, Vec<f64>) {
        (
            (&self.a_i * y).iter().copied().collect(),
            (&self.a_e * y).iter().copied().collect(),
        )
    }
}

/// Geodesically convex polygon on `S²`, feasible iff `⟨p, n_i⟩ ≤ 0` for every edge normal.
#[derive(Debug, Clone)]
pub struct SphericalPolygon {
    vertices: Vec<Point>,
    normals: Vec<Point>,
}

impl SphericalPolygon {
    /// Vertices in cyclic order (either orientation).
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let m = vertices.len();
        if m < 3 || vertices.iter().any(|v| v.len() != 3) {
            return Err(Error::BadParams(
                "a spherical polygon needs at least three vertices in R^3".into(),
            ));
        }
        let vertices: Vec<Point> = vertices.into_iter().map(|v| v.normalize()).collect();
        let centroid = vertices.iter().fold(DVector::zeros(3), |acc, v| acc + v);
        if centroid.norm() < 1e-9 {
            return Err(Error::BadParams(
                "polygon is not contained in an open hemisphere".into(),
            ));
        }
        let mut normals = Vec::with_capacity(m);
        for i in 0..m {
            let a = Vector3::new(vertices[i][0], vertices[i][1], vertices[i][2]);
            let b = Vector3::new(
                vertices[(i + 1) % m][0],
                vertices[(i + 1) % m][1],
                vertices[(i + 1) % m][2],
            );
            let c = a.cross(&b);
            if c.norm() < 1e-9 {
                return Err(Error::BadParams("degenerate edge".into()));
            }
            let mut n = DVector::from_column_slice(c.normalize().as_slice());
            if n.dot(&centroid) > 0.0 {
                n = -n;
            }
            normals.push(n);
        }
        for (i, n) in normals.iter().enumerate() {
            for (j, v) in vertices.iter().enumerate() {
                if j != i && j != (i + 1) % m && n.dot(v) > -1e-9 {
                    return Err(Error::BadParams(
                        "polygon is degenerate or not geodesically convex".into(),
                    ));
                }
            }
        }
        Ok(Self { vertices, normals })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    /// Edges with `|⟨q, n_i⟩| ≤ ACTIVE_TOL`.
    pub fn active_edges(&self, q: &Point) -> Vec<usize> {
        (0..self.normals.len())
            .filter(|&i| self.normals[i].dot(q).abs() <= ACTIVE_TOL)
            .collect()
    }

    fn geodesic_radius(&self, q: &Point, active: &[usize]) -> f64 {
        (0..self.normals.len())
            .filter(|i| !active.contains(i))
            .map(|i| self.normals[i].dot(q).abs().min(1.0).asin())
            .fold(1.0, f64::min)
    }

    fn chart_data(&self, q: &Point, kind: SphereChartKind) -> Result<AdaptedChartData> {
        let frame = sphere_frame(q);
        let active = self.active_edges(q);
        let mut a_hat = DMatrix::zeros(active.len(), 2);
        for (r, &i) in active.iter().enumerate() {
            let row = frame.transpose() * &self.normals[i];
            a_hat.set_row(r, &row.transpose());
        }
        let geo = self.geodesic_radius(q, &active);
        let radius = match kind {
            SphereChartKind::Gnomonic => geo.tan(),
            _ => geo,
        };
        let chart = SphereChart::new(kind, q.clone(), frame);
        Ok(AdaptedChartData {
            n: 2,
            k: 2,
            ell: active.len(),
            a_hat,
            chart: Arc::new(chart),
            radius,
        })
    }

    /// Nearest point of the polygon to `y` on the sphere.
    pub fn nearest_point(&self, y: &Point) -> Point {
        let y = y.normalize();
        if self.contains(&y, 0.0) {
            return y;
        }
        let m = self.normals.len();
        let mut best = self.vertices[0].clone();
        let mut best_dot = f64::NEG_INFINITY;
        let consider = |c: Point, best: &mut Point, best_dot: &mut f64| {
            let d = c.dot(&y);
            if d > *best_dot {
                *best_dot = d;
                *best = c;
            }
        };
        for v in &self.vertices {
            consider(v.clone(), &mut best, &mut best_dot);
        }
        for i in 0..m {
            let n = &self.normals[i];
            let z = &y - n * n.dot(&y);
            if z.norm() < 1e-12 {
                continue;
            }
            let z = z.normalize();
            let inside = (0..m)
                .filter(|&j| j != i)
                .all(|j| self.normals[j].dot(&z) <= 1e-12);
            if inside {
                consider(z, &mut best, &mut best_dot);
            }
        }
        best
    }
}

impl CornerSet for SphericalPolygon {
    fn name(&self) -> String {
        format!("spherical-polygon[{}]", self.vertices.len())
    }
    fn ambient(&self) -> Arc<dyn Manifold> {
        Arc::new(Sphere::new(2))
    }
    fn dim_k(&self) -> usize {
        2
    }
    fn contains(&self, q: &Point, tol: f64) -> bool {
        q.len() == 3
            && (q.norm() - 1.0).abs() <= 1e-6
            && self.normals.iter().all(|n| n.dot(q) <= tol)
    }
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        self.chart_data(q, SphereChartKind::Normal)
    }
    fn alternate_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        self.chart_data(q, SphereChartKind::Gnomonic)
    }
    fn violation(&self, y: &Point) -> f64 {
        self.normals.iter().map(|n| n.dot(y).max(0.0)).sum()
    }
    fn anchor(&self, y: &Point, eps: f64) -> Result<Point> {
        let q0 = self.nearest_point(y);
        let m = self.normals.len();
        let near: Vec<usize> = (0..m)
            .filter(|&i| self.normals[i].dot(&q0) > -eps)
            .collect();
        let candidate = match near.len() {
            0 => return Ok(q0),
            1 => {
                let n = &self.normals[near[0]];
                (&q0 - n * n.dot(&q0)).normalize()
            }
            _ => {
                // shared vertex of two near edges; vertex i joins edges i-1 and i
                let mut pick: Option<Point> = None;
                for i in 0..m {
                    let prev = (i + m - 1) % m;
                    if near.contains(&i) && near.contains(&prev) {
                        let v = &self.vertices[i];
                        if pick.as_ref().is_none_or(|p| v.dot(&q0) > p.dot(&q0)) {
                            pick = Some(v.clone());
                        }
                    }
                }
                match pick {
                    Some(v) => v,
                    None => return Ok(q0),
                }
            }
        };
        if self.contains(&candidate, 1e-12) {
            Ok(candidate)
        } else {
            Ok(q0)
        }
    }
    fn constraint_functions(&self, y: &Point) -> (Vec<f64>, Vec<f64>) {
        (self.normals.iter().map(|n| n.dot(y)).collect(), Vec::new())
    }
}

/// Chart `(p₁, p₂) ↦ ((φ(p₁) + φ(p₂))/2, φ(p₂) − φ(p₁))` on `N × N`.
#[derive(Debug, Clone)]
pub struct DiagonalChart {
    phi: Arc<dyn Chart>,
    center: Point,
}

impl DiagonalChart {
    pub fn new(phi: Arc<dyn Chart>) -> Self {
        let c = phi.center();
        let mut center = c.as_slice().to_vec();
        center.extend_from_slice(c.as_slice());
        Self {
            phi,
            center: DVector::from_vec(center),
        }
    }

    fn halves(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let d = self.phi.dim();
        let m = x.rows(0, d).into_owned();
        let dd = x.rows(d, d).into_owned();
        (&m - &dd * 0.5, &m + &dd * 0.5)
    }
}

impl Chart for DiagonalChart {
    fn id(&self) -> String {
        format!("diagonal[{}]", self.phi.id())
    }
    fn center(&self) -> &Point {
        &self.center
    }
    fn dim(&self) -> usize {
        2 * self.phi.dim()
    }
    fn ambient_dim(&self) -> usize {
        2 * self.phi.ambient_dim()
    }
    fn radius(&self) -> f64 {
        self.phi.radius() / 2.0
    }
    fn forward(&self, p: &Point) -> Result<DVector<f64>> {
        let a = self.phi.ambient_dim();
        let x1 = self.phi.forward(&p.rows(0, a).into_owned())?;
        let x2 = self.phi.forward(&p.rows(a, a).into_owned())?;
        let mut out = ((&x1 + &x2) * 0.5).as_slice().to_vec();
        out.extend_from_slice((&x2 - &x1).as_slice());
        let x = DVector::from_vec(out);
        check_ball(&x, self.radius())?;
        Ok(x)
    }
    fn inverse(&self, x: &DVector<f64>) -> Result<Point> {
        check_ball(x, self.radius())?;
        let (a, b) = self.halves(x);
        let mut out = self.phi.inverse(&a)?.as_slice().to_vec();
        out.extend_from_slice(self.phi.inverse(&b)?.as_slice());
        Ok(DVector::from_vec(out))
    }
    fn inverse_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (a, b) = self.halves(x);
        let ja = self.phi.inverse_jacobian(&a)?;
        let jb = self.phi.inverse_jacobian(&b)?;
        let (am, d) = (self.phi.ambient_dim(), self.phi.dim());
        let mut j = DMatrix::zeros(2 * am, 2 * d);
        j.view_mut((0, 0), (am, d)).copy_from(&ja);
        j.view_mut((0, d), (am, d)).copy_from(&(&ja * -0.5));
        j.view_mut((am, 0), (am, d)).copy_from(&jb);
        j.view_mut((am, d), (am, d)).copy_from(&(&jb * 0.5));
        Ok(j)
    }
    fn forward_jacobian(&self, p: &Point) -> Result<DMatrix<f64>> {
        let (am, d) = (self.phi.ambient_dim(), self.phi.dim());
        let f1 = self.phi.forward_jacobian(&p.rows(0, am).into_owned())?;
        let f2 = self.phi.forward_jacobian(&p.rows(am, am).into_owned())?;
        let mut j = DMatrix::zeros(2 * d, 2 * am);
        j.view_mut((0, 0), (d, am)).copy_from(&(&f1 * 0.5));
        j.view_mut((0, am), (d, am)).copy_from(&(&f2 * 0.5));
        j.view_mut((d, 0), (d, am)).copy_from(&(-&f1));
        j.view_mut((d, am), (d, am)).copy_from(&f2);
        Ok(j)
    }
}

/// Diagonal `{(y, y)} ⊂ N × N`.
#[derive(Debug, Clone)]
pub struct Diagonal {
    base: Arc<dyn Manifold>,
}

impl Diagonal {
    pub fn new(base: Arc<dyn Manifold>) -> Self {
        Self { base }
    }

    fn split(&self, q: &Point) -> (Point, Point) {
        let a = self.base.ambient_dim();
        (q.rows(0, a).into_owned(), q.rows(a, a).into_owned())
    }

    fn data(&self, q: &Point, variant: usize) -> Result<AdaptedChartData> {
        let (q1, _) = self.split(q);
        let phi = self
            .base
            .chart(&q1, variant % self.base.chart_names().len())?;
        let d = self.base.dim();
        let chart = DiagonalChart::new(phi);
        let radius = chart.radius();
        Ok(AdaptedChartData {
            n: 2 * d,
            k: d,
            ell: 0,
            a_hat: DMatrix::zeros(0, d),
            chart: Arc::new(chart),
            radius,
        })
    }
}

impl CornerSet for Diagonal {
    fn name(&self) -> String {
        format!("diagonal[{}]", self.base.name())
    }
    fn ambient(&self) -> Arc<dyn Manifold> {
        Arc::new(ProductManifold::new(vec![
            self.base.clone(),
            self.base.clone(),
        ]))
    }
    fn dim_k(&self) -> usize {
        self.base.dim()
    }
    fn contains(&self, q: &Point, tol: f64) -> bool {
        if q.len() != 2 * self.base.ambient_dim() {
            return false;
        }
        let (a, b) = self.split(q);
        self.base.contains(&a, 1e-6) && (a - b).amax() <= tol
    }
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        self.data(q, 0)
    }
    fn alternate_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        self.data(q, 1)
    }
    fn violation(&self, y: &Point) -> f64 {
        let (a, b) = self.split(y);
        (a - b).iter().map(|x| x.abs()).sum()
    }
    fn anchor(&self, y: &Point, _eps: f64) -> Result<Point> {
        let (a, b) = self.split(y);
        let phi = self.base.chart(&a, 0)?;
        let mid = phi.inverse(&(phi.forward(&b)? * 0.5))?;
        let mut out = mid.as_slice().to_vec();
        out.extend_from_slice(mid.as_slice());
        Ok(DVector::from_vec(out))
    }
    fn constraint_functions(&self, y: &Point) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.split(y);
        (Vec::new(), (a - b).iter().copied().collect())
    }
}

/// `K = M`, the whole manifold (corner index 0 everywhere).
#[derive(Debug, Clone)]
pub struct Whole {
    m: Arc<dyn Manifold>,
}

impl Whole {
    pub fn new(m: Arc<dyn Manifold>) -> Self {
        Self { m }
    }

    fn data(&self, q: &Point, variant: usize) -> Result<AdaptedChartData> {
        let chart = self.m.chart(q, variant % self.m.chart_names().len())?;
        let d = self.m.dim();
        let radius = chart.radius();
        Ok(AdaptedChartData {
            n: d,
            k: d,
            ell: 0,
            a_hat: DMatrix::zeros(0, d),
            chart,
            radius,
        })
    }
}

impl CornerSet for Whole {
    fn name(&self) -> String {
        format!("whole[{}]", self.m.name())
    }
    fn ambient(&self) -> Arc<dyn Manifold> {
        self.m.clone()
    }
    fn dim_k(&self) -> usize {
        self.m.dim()
    }
    fn contains(&self, q: &Point, _tol: f64) -> bool {
        self.m.contains(q, 1e-6)
    }
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        self.data(q, 0)
    }
    fn alternate_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        self.data(q, 1)
    }
    fn violation(&self, _y: &Point) -> f64 {
        0.0
    }
    fn anchor(&self, y: &Point, _eps: f64) -> Result<Point> {
        Ok(self.m.project(y))
    }
    fn constraint_functions(&self, _y: &Point) -> (Vec<f64>, Vec<f64>) {
        (Vec::new(), Vec::new())
    }
}

/// Product `K₁ × K₂ ⊂ N₁ × N₂`; corner indices add.
#[derive(Debug, Clone)]
pub struct ProductSet {
    a: Arc<dyn CornerSet>,
    b: Arc<dyn CornerSet>,
}

impl ProductSet {
    pub fn new(a: Arc<dyn CornerSet>, b: Arc<dyn CornerSet>) -> Self {
        Self { a, b }
    }

    fn split(&self, q: &Point) -> (Point, Point) {
        let na = self.a.ambient().ambient_dim();
        let nb = self.b.ambient().ambient_dim();
        (q.rows(0, na).into_owned(), q.rows(na, nb).into_owned())
    }

    fn combine(&self, da: AdaptedChartData, db: AdaptedChartData) -> Result<AdaptedChartData> {
        let n = da.n + db.n;
        let k = da.k + db.k;
        let ell = da.ell + db.ell;
        // product coordinates (Ka, Wa, Kb, Wb) reordered to (Ka, Kb, Wa, Wb)
        let mut order: Vec<usize> = (0..da.k).collect();
        order.extend(da.n..da.n + db.k);
        order.extend(da.k..da.n);
        order.extend(da.n + db.k..n);
        let mut perm = DMatrix::zeros(n, n);
        for (row, &i) in order.iter().enumerate() {
            perm[(row, i)] = 1.0;
        }
        let mut a_hat = DMatrix::zeros(ell, k);
        if da.ell > 0 {
            a_hat.view_mut((0, 0), (da.ell, da.k)).copy_from(&da.a_hat);
        }
        if db.ell > 0 {
            a_hat
                .view_mut((da.ell, da.k), (db.ell, db.k))
                .copy_from(&db.a_hat);
        }
        let radius = da.radius.min(db.radius);
        let inner = Arc::new(ProductChart::new(vec![da.chart.clone(), db.chart.clone()]));
        let id = format!("product-set[{},{}]", da.chart.id(), db.chart.id());
        let chart = LinearChart::new(id, inner, perm)?;
        Ok(AdaptedChartData {
            n,
            k,
            ell,
            a_hat,
            chart: Arc::new(chart),
            radius,
        })
    }
}

impl CornerSet for ProductSet {
    fn name(&self) -> String {
        format!("{} x {}", self.a.name(), self.b.name())
    }
    fn ambient(&self) -> Arc<dyn Manifold> {
        Arc::new(ProductManifold::new(vec![
            self.a.ambient(),
            self.b.ambient(),
        ]))
    }
    fn dim_k(&self) -> usize {
        self.a.dim_k() + self.b.dim_k()
    }
    fn contains(&self, q: &Point, tol: f64) -> bool {
        let (qa, qb) = self.split(q);
        self.a.contains(&qa, tol) && self.b.contains(&qb, tol)
    }
    fn primary_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        let (qa, qb) = self.split(q);
        self.combine(self.a.primary_chart(&qa)?, self.b.primary_chart(&qb)?)
    }
    fn alternate_chart(&self, q: &Point) -> Result<AdaptedChartData> {
        let (qa, qb) = self.split(q);
        self.combine(self.a.alternate_chart(&qa)?, self.b.alternate_chart(&qb)?)
    }
    fn violation(&self, y: &Point) -> f64 {
        let (ya, yb) = self.split(y);
        self.a.violation(&ya) + self.b.violation(&yb)
    }
    fn anchor(&self, y: &Point, eps: f64) -> Result<Point> {
        let (ya, yb) = self.split(y);
        let mut out = self.a.anchor(&ya, eps)?.as_slice().to_vec();
        out.extend_from_slice(self.b.anchor(&yb, eps)?.as_slice());
        Ok(DVector::from_vec(out))
    }
    fn constraint_functions(&self, y: &Point) -> (Vec<f64>, Vec<f64>) {
        let (ya, yb) = self.split(y);
        let (mut ia, mut ea) = self.a.constraint_functions(&ya);
        let (ib, eb) = self.b.constraint_functions(&yb);
        ia.extend(ib);
        ea.extend(eb);
        (ia, ea)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corners::{
        corner_index, inner_tangent_cone, validate, validate_variant, zero_tangent_space,
    };

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn triangle() -> SphericalPolygon {
        SphericalPolygon::new(vec![
            v(&[1.0, 0.0, 0.2]),
            v(&[0.0, 1.0, 0.2]),
            v(&[-0.3, -0.3, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn orthant_indices() {
        let k = SignPattern::classical(2, 0);
        assert_eq!(corner_index(&k, &v(&[0.0, 0.0])).unwrap(), 2);
        assert_eq!(corner_index(&k, &v(&[-1.0, 0.0])).unwrap(), 1);
        assert_eq!(corner_index(&k, &v(&[-1.0, -2.0])).unwrap(), 0);
        assert!(matches!(
            corner_index(&k, &v(&[1.0, 0.0])),
            Err(Error::NotInSet)
        ));
        let data = k.primary_chart(&v(&[-1.0, -2.0])).unwrap();
        assert_eq!(data.radius, 1.0);
        let data = k.primary_chart(&v(&[0.0, -1.0])).unwrap();
        assert_eq!(data.a_hat, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn zero_tangent_spaces() {
        let k = SignPattern::classical(2, 0);
        assert_eq!(zero_tangent_space(&k, &v(&[0.0, 0.0])).unwrap().ncols(), 0);
        let z = zero_tangent_space(&k, &v(&[-1.0, 0.0])).unwrap();
        assert_eq!(z.ncols(), 1);
        // chart order puts the active coordinate y₂ first: span{e₁} of R² is chart axis 2
        let data = k.primary_chart(&v(&[-1.0, 0.0])).unwrap();
        let ambient = data.chart.inverse_jacobian(&DVector::zeros(2)).unwrap() * z.column(0);
        assert!((ambient.abs() - v(&[1.0, 0.0])).norm() < 1e-12);
        assert_eq!(
            zero_tangent_space(&k, &v(&[-1.0, -1.0])).unwrap().ncols(),
            2
        );
    }

    #[test]
    fn classical_inner_cone() {
        let k = SignPattern::classical(2, 1);
        let c = inner_tangent_cone(&k, &v(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(
            c.a_i,
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(c.a_e, DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]));
    }

    #[test]
    fn validation_failures() {
        let pyramid = ConeSet::new(
            DMatrix::from_row_slice(
                4,
                3,
                &[
                    1.0, 0.0, -1.0, -1.0, 0.0, -1.0, 0.0, 1.0, -1.0, 0.0, -1.0, -1.0,
                ],
            ),
            DMatrix::zeros(0, 3),
        )
        .unwrap();
        let err = validate(&pyramid, &v(&[0.0, 0.0, 0.0]), 1e-9).unwrap_err();
        assert!(
            matches!(err, Error::ValidationFailure(ref m) if m.contains("ℓ ≤ k")),
            "{err}"
        );
        let dup = ConeSet::new(
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            DMatrix::zeros(0, 3),
        )
        .unwrap();
        let err = validate(&dup, &v(&[0.0, 0.0, 0.0]), 1e-9).unwrap_err();
        assert!(matches!(err, Error::ValidationFailure(ref m) if m.contains("surjectivity")));
        let good = SignPattern::classical(3, 1);
        assert!(validate(&good, &v(&[0.0, -1.0, 0.0, 0.0]), 1e-9).is_ok());
    }

    #[test]
    fn triangle_charts_validate_and_agree_on_index() {
        let t = triangle();
        let verts = t.vertices().to_vec();
        let edge_mid = (&verts[0] + &verts[1]).normalize();
        let interior = (&verts[0] + &verts[1] + &verts[2]).normalize();
        for (q, ell) in [(verts[2].clone(), 2), (edge_mid, 1), (interior, 0)] {
            for variant in 0..3 {
                let rep = validate_variant(&t, &q, variant, 1e-9).unwrap();
                assert_eq!(rep.ell, ell, "variant {variant}");
            }
        }
    }

    #[test]
    fn diagonal_and_products_validate() {
        let s2: Arc<dyn Manifold> = Arc::new(Sphere::new(2));
        let d = Diagonal::new(s2);
        let y = v(&[0.0, 0.6, 0.8]);
        let q = DVector::from_vec([y.as_slice(), y.as_slice()].concat());
        for variant in 0..3 {
            let rep = validate_variant(&d, &q, variant, 1e-9).unwrap();
            assert_eq!((rep.n, rep.k, rep.ell), (4, 2, 0));
        }
        let prod = ProductSet::new(Arc::new(SignPattern::classical(1, 0)), Arc::new(triangle()));
        let vert = triangle().vertices()[1].clone();
        let q = DVector::from_vec([&[0.0][..], vert.as_slice()].concat());
        assert_eq!(corner_index(&prod, &q).unwrap(), 3);
        for variant in 0..3 {
            validate_variant(&prod, &q, variant, 1e-9).unwrap();
        }
    }

    #[test]
    fn polygon_anchor_clamps_near_edges() {
        let t = triangle();
        let verts = t.vertices().to_vec();
        let mid = (&verts[0] + &verts[1]).normalize();
        let outside = (&mid - &t.normals()[0] * -0.01).normalize();
        let a = t.anchor(&outside, 1e-3).unwrap();
        assert_eq!(t.active_edges(&a), vec![0]);
        let near_vertex = (&verts[2] * 0.999 + &mid * 0.001).normalize();
        let a = t.anchor(&near_vertex, 1e-2).unwrap();
        assert!((a - &verts[2]).norm() < 1e-12);
    }
}

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_ball, Chart, Point};
use crate::{Error, Result};

/// Affine chart `x = Q (p − c)` with right inverse `p = c + B x`.
#[derive(Debug, Clone)]
pub struct AffineChart {
    id: String,
    center: Point,
    q: DMatrix<f64>,
    b: DMatrix<f64>,
    radius: f64,
}

impl AffineChart {
    /// `q` is dim × ambient, `b` is ambient × dim with `q b = I`.
    pub fn new(
        id: impl Into<String>,
        center: Point,
        q: DMatrix<f64>,
        b: DMatrix<f64>,
        radius: f64,
    ) -> Self {
        debug_assert_eq!(q.ncols(), center.len());
        debug_assert_eq!(b.nrows(), center.len());
        Self {
            id: id.into(),
            center,
            q,
            b,
            radius,
        }
    }

    /// Square invertible case.
    pub fn invertible(id: impl Into<String>, center: Point, q: DMatrix<f64>) -> Result<Self> {
        let b = q
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::BadParams("affine chart matrix is singular".into()))?;
        Ok(Self::new(id, center, q, b, f64::INFINITY))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }
}

impl Chart for AffineChart {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn center(&self) -> &Point {
        &self.center
    }
    fn dim(&self) -> usize {
        self.q.nrows()
    }
    fn ambient_dim(&self) -> usize {
        self.center.len()
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn forward(&self, p: &Point) -> Result<DVector<f64>> {
        let x = &self.q * (p - &self.center);
        check_ball(&x, self.radius)?;
        Ok(x)
    }
    fn inverse(&self, x: &DVector<f64>) -> Result<Point> {
        check_ball(x, self.radius)?;
        Ok(&self.center + &self.b * x)
    }
    fn inverse_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.b.clone())
    }
    fn forward_jacobian(&self, _p: &Point) -> Result<DMatrix<f64>> {
        Ok(self.q.clone())
    }
}

/// The four classical sphere charts centered at `c` with tangent frame `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereChartKind {
    /// Inverse of the exponential map.
    Normal,
    /// Projection from the antipode, `x = Eᵀq / (1 + ⟨c, q⟩)`.
    Stereographic,
    /// `x = Eᵀq` on the hemisphere around `c`.
    Orthographic,
    /// Central projection, `x = Eᵀq / ⟨c, q⟩`.
    Gnomonic,
}

impl SphereChartKind {
    pub const ALL: [SphereChartKind; 4] = [
        SphereChartKind::Normal,
        SphereChartKind::Stereographic,
        SphereChartKind::Orthographic,
        SphereChartKind::Gnomonic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SphereChartKind::Normal => "normal",
            SphereChartKind::Stereographic => "stereographic",
            SphereChartKind::Orthographic => "orthographic",
            SphereChartKind::Gnomonic => "gnomonic",
        }
    }

    fn default_radius(self) -> f64 {
        match self {
            SphereChartKind::Normal => 3.0,
            SphereChartKind::Stereographic => 10.0,
            SphereChartKind::Orthographic => 0.95,
            SphereChartKind::Gnomonic => 50.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SphereChart {
    kind: SphereChartKind,
    center: Point,
    frame: DMatrix<f64>,
    radius: f64,
}

impl SphereChart {
    pub fn new(kind: SphereChartKind, center: Point, frame: DMatrix<f64>) -> Self {
        Self {
            kind,
            center,
            frame,
            radius: kind.default_radius(),
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn kind(&self) -> SphereChartKind {
        self.kind
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }
}

impl Chart for SphereChart {
    fn id(&self) -> String {
        format!("sphere/{}", self.kind.name())
    }
    fn center(&self) -> &Point {
        &self.center
    }
    fn dim(&self) -> usize {
        self.frame.ncols()
    }
    fn ambient_dim(&self) -> usize {
        self.center.len()
    }
    fn radius(&self) -> f64 {
        self.radius
    }

    fn forward(&self, p: &Point) -> Result<DVector<f64>> {
        let t = self.frame.transpose() * p;
        let c = self.center.dot(p);
        let x = match self.kind {
            SphereChartKind::Normal => {
                let s = t.norm();
                if s < 1e-300 {
                    if c <= 0.0 {
                        return Err(Error::Domain(
                            "antipodal point has no normal coordinates".into(),
                        ));
                    }
                    DVector::zeros(t.len())
                } else {
                    t * (s.atan2(c) / s)
                }
            }
            SphereChartKind::Stereographic => {
                if 1.0 + c <= 1e-12 {
                    return Err(Error::Domain("antipode outside stereographic chart".into()));
                }
                t / (1.0 + c)
            }
            SphereChartKind::Orthographic | SphereChartKind::Gnomonic => {
                if c <= 0.0 {
                    return Err(Error::Domain(
                        "point outside the open hemisphere of the chart".into(),
                    ));
                }
                if self.kind == SphereChartKind::Orthographic {
                    t
                } else {
                    t / c
                }
            }
        };
        check_ball(&x, self.radius)?;
        Ok(x)
    }

    fn inverse(&self, x: &DVector<f64>) -> Result<Point> {
        check_ball(x, self.radius)?;
        let ex = &self.frame * x;
        let c = &self.center;
        Ok(match self.kind {
            SphereChartKind::Normal => {
                let r = x.norm();
                let sinc = if r < 1e-8 {
                    1.0 - r * r / 6.0
                } else {
                    r.sin() / r
                };
                c * r.cos() + ex * sinc
            }
            SphereChartKind::Stereographic => {
                let s = x.norm_squared();
                (c * (1.0 - s) + ex * 2.0) / (1.0 + s)
            }
            SphereChartKind::Orthographic => {
                let s = x.norm_squared();
                c * (1.0 - s).sqrt() + ex
            }
            SphereChartKind::Gnomonic => {
                let y = c + ex;
                let n = y.norm();
                y / n
            }
        })
    }

    fn inverse_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_ball(x, self.radius)?;
        let e = &self.frame;
        let c = &self.center;
        Ok(match self.kind {
            SphereChartKind::Normal => {
                let r = x.norm();
                let ex = e * x;
                if r < 1e-6 {
                    -(c * x.transpose()) + e * (1.0 - r * r / 6.0) - (&ex * x.transpose()) / 3.0
                } else {
                    let xh = x / r;
                    -(c * xh.transpose()) * r.sin()
                        + e * (r.sin() / r)
                        + (&ex * xh.transpose()) * ((r * r.cos() - r.sin()) / (r * r))
                }
            }
            SphereChartKind::Stereographic => {
                let s = x.norm_squared();
                let num = c * (1.0 - s) + e * x * 2.0;
                let dnum = -(c * x.transpose()) * 2.0 + e * 2.0;
                dnum / (1.0 + s) - (num * x.transpose()) * (2.0 / ((1.0 + s) * (1.0 + s)))
            }
            SphereChartKind::Orthographic => {
                let s = x.norm_squared();
                e - (c * x.transpose()) / (1.0 - s).sqrt()
            }
            SphereChartKind::Gnomonic => {
                let y = c + e * x;
                let n = y.norm();
                let q = &y / n;
                let amb = c.len();
                (DMatrix::identity(amb, amb) - &q * q.transpose()) * e / n
            }
        })
    }
}

/// Block chart on a product of manifolds.
#[derive(Debug, Clone)]
pub struct ProductChart {
    parts: Vec<Arc<dyn Chart>>,
    center: Point,
}

impl ProductChart {
    pub fn new(parts: Vec<Arc<dyn Chart>>) -> Self {
        let mut center = Vec::new();
        for c in &parts {
            center.extend_from_slice(c.center().as_slice());
        }
        Self {
            parts,
            center: DVector::from_vec(center),
        }
    }

    pub fn parts(&self) -> &[Arc<dyn Chart>] {
        &self.parts
    }
}

impl Chart for ProductChart {
    fn id(&self) -> String {
        let ids: Vec<String> = self.parts.iter().map(|c| c.id()).collect();
        format!("product[{}]", ids.join(","))
    }
    fn center(&self) -> &Point {
        &self.center
    }
    fn dim(&self) -> usize {
        self.parts.iter().map(|c| c.dim()).sum()
    }
    fn ambient_dim(&self) -> usize {
        self.center.len()
    }
    fn radius(&self) -> f64 {
        self.parts
            .iter()
            .map(|c| c.radius())
            .fold(f64::INFINITY, f64::min)
    }
    fn forward(&self, p: &Point) -> Result<DVector<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        let mut off = 0;
        for c in &self.parts {
            let a = c.ambient_dim();
            let x = c.forward(&p.rows(off, a).into_owned())?;
            out.extend_from_slice(x.as_slice());
            off += a;
        }
        Ok(DVector::from_vec(out))
    }
    fn inverse(&self, x: &DVector<f64>) -> Result<Point> {
        let mut out = Vec::with_capacity(self.ambient_dim());
        let mut off = 0;
        for c in &self.parts {
            let d = c.dim();
            let p = c.inverse(&x.rows(off, d).into_owned())?;
            out.extend_from_slice(p.as_slice());
            off += d;
        }
        Ok(DVector::from_vec(out))
    }
    fn inverse_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.ambient_dim(), self.dim());
        let (mut ro, mut co) = (0, 0);
        for c in &self.parts {
            let (a, d) = (c.ambient_dim(), c.dim());
            let block = c.inverse_jacobian(&x.rows(co, d).into_owned())?;
            j.view_mut((ro, co), (a, d)).copy_from(&block);
            ro += a;
            co += d;
        }
        Ok(j)
    }
    fn forward_jacobian(&self, p: &Point) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.dim(), self.ambient_dim());
        let (mut ro, mut co) = (0, 0);
        for c in &self.parts {
            let (a, d) = (c.ambient_dim(), c.dim());
            let block = c.forward_jacobian(&p.rows(co, a).into_owned())?;
            j.view_mut((ro, co), (d, a)).copy_from(&block);
            ro += d;
            co += a;
        }
        Ok(j)
    }
}

/// Chart followed by an invertible linear map of the coordinates.
#[derive(Debug, Clone)]
pub struct LinearChart {
    id: String,
    inner: Arc<dyn Chart>,
    m: DMatrix<f64>,
    minv: DMatrix<f64>,
    radius: f64,
}

impl LinearChart {
    pub fn new(id: impl Into<String>, inner: Arc<dyn Chart>, m: DMatrix<f64>) -> Result<Self> {
        let minv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::BadParams("linear chart matrix is singular".into()))?;
        let smax = crate::linalg::singular_values(&minv)
            .into_iter()
            .fold(0.0, f64::max);
        let radius = inner.radius() / smax.max(f64::MIN_POSITIVE);
        Ok(Self {
            id: id.into(),
            inner,
            m,
            minv,
            radius,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl Chart for LinearChart {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn center(&self) -> &Point {
        self.inner.center()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn forward(&self, p: &Point) -> Result<DVector<f64>> {
        let x = &self.m * self.inner.forward(p)?;
        check_ball(&x, self.radius)?;
        Ok(x)
    }
    fn inverse(&self, x: &DVector<f64>) -> Result<Point> {
        check_ball(x, self.radius)?;
        self.inner.inverse(&(&self.minv * x))
    }
    fn inverse_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.inner.inverse_jacobian(&(&self.minv * x))? * &self.minv)
    }
    fn forward_jacobian(&self, p: &Point) -> Result<DMatrix<f64>> {
        Ok(&self.m * self.inner.forward_jacobian(p)?)
    }
}

/// Radial rescaling `x' = d · exp(β⟨w, x⟩) · x` of another chart.
///
/// Every cone is invariant under positive rescaling of individual vectors,
/// so this wrapper turns an adapted chart into another adapted chart with a
/// genuinely nonlinear transition.
#[derive(Debug, Clone)]
pub struct ScaledChart {
    inner: Arc<dyn Chart>,
    d: f64,
    beta: f64,
    w: DVector<f64>,
    inner_radius: f64,
    radius: f64,
}

impl ScaledChart {
    pub const DEFAULT_D: f64 = 2.0;
    pub const DEFAULT_BETA: f64 = 0.3;

    pub fn new(inner: Arc<dyn Chart>) -> Self {
        let dim = inner.dim();
        let w = if dim == 0 {
            DVector::zeros(0)
        } else {
            DVector::from_fn(dim, |i, _| i as f64 + 1.0).normalize()
        };
        Self::with_params(inner, Self::DEFAULT_D, Self::DEFAULT_BETA, w)
    }

    pub fn with_params(inner: Arc<dyn Chart>, d: f64, beta: f64, w: DVector<f64>) -> Self {
        let r_in = inner.radius().min(1.0);
        let radius = d * r_in * (-beta * r_in).exp();
        Self {
            inner,
            d,
            beta,
            w,
            inner_radius: r_in,
            radius,
        }
    }

    fn solve_u(&self, t: f64) -> f64 {
        // u · exp(βu) = t, monotone for βu > −1
        let mut u = t;
        for _ in 0..60 {
            let e = (self.beta * u).exp();
            let r = u * e - t;
            let dr = e * (1.0 + self.beta * u);
            let step = r / dr;
            u -= step;
            if step.abs() <= 1e-16 * (1.0 + u.abs()) {
                break;
            }
        }
        u
    }
}

impl Chart for ScaledChart {
    fn id(&self) -> String {
        format!("scaled[{}]", self.inner.id())
    }
    fn center(&self) -> &Point {
        self.inner.center()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }
    fn radius(&self) -> f64 {
        self.radius
    }
    fn forward(&self, p: &Point) -> Result<DVector<f64>> {
        let x = self.inner.forward(p)?;
        check_ball(&x, self.inner_radius)?;
        let s = &x * (self.d * (self.beta * self.w.dot(&x)).exp());
        check_ball(&s, self.radius)?;
        Ok(s)
    }
    fn inverse(&self, s: &DVector<f64>) -> Result<Point> {
        check_ball(s, self.radius)?;
        let u = self.solve_u(self.w.dot(s) / self.d);
        let x = s * ((-self.beta * u).exp() / self.d);
        self.inner.inverse(&x)
    }
    fn inverse_jacobian(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_ball(s, self.radius)?;
        let u = self.solve_u(self.w.dot(s) / self.d);
        let x = s * ((-self.beta * u).exp() / self.d);
        let n = x.len();
        let ds_dx = (DMatrix::identity(n, n) + (&x * self.w.transpose()) * self.beta)
            * (self.d * (self.beta * u).exp());
        let dx_ds = ds_dx
            .try_inverse()
            .ok_or_else(|| Error::Domain("scaled chart is singular here".into()))?;
        Ok(self.inner.inverse_jacobian(&x)? * dx_ds)
    }
}

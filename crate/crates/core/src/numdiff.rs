//! Central finite differences used inside the library when no analytic
//! derivative is supplied.

use nalgebra::{DMatrix, DVector};

use crate::Result;

/// Default step for first derivatives.
pub const FD_STEP: f64 = 1e-5;

pub(crate) fn jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        cols.push((f(&xp)? - f(&xm)?) / (2.0 * h));
    }
    if cols.is_empty() {
        let m = f(x)?.len();
        return Ok(DMatrix::zeros(m, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

pub(crate) fn gradient<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        g[j] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Second central differences on the stencil `x ± h e_i ± h e_j`, symmetrized.
pub(crate) fn hessian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(x)?;
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += 2.0 * h;
        xm[i] -= 2.0 * h;
        hess[(i, i)] = (f(&xp)? - 2.0 * f0 + f(&xm)?) / (4.0 * h * h);
        for j in (i + 1)..n {
            let eval = |si: f64, sj: f64| {
                let mut y = x.clone();
                y[i] += si * h;
                y[j] += sj * h;
                f(&y)
            };
            let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

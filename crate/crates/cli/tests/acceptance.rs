//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Runs as a plain binary. It exits non-zero on a failed criterion only when
//! `ACCEPTANCE_STRICT=1` is set.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use manicorn::cones::PolyhedralCone;
use manicorn::corners::{
    inner_tangent_cone, ConeSet, CornerSet, Diagonal, ProductSet, Sign, SignPattern,
    SphericalPolygon, Whole,
};
use manicorn::firstorder::{
    check_licq, check_mfcq, check_transversality, check_zkrcq, classical_report, solve_kkt,
    Activity, TOL_KKT,
};
use manicorn::geometry::{Euclidean, Manifold, Sphere};
use manicorn::models::{self, classical_instance, AdjointSolution, Model, Params};
use manicorn::oracles::{cone_quadratic_minimum, grid_minimize, tangent_cone_oracle, GridRegion};
use manicorn::problem::{LocalModel, ProblemInstance, Rep};
use manicorn::secondorder::{
    critical_cone, lagrangian_hessian, sample_cone, sosc_check, PulledBackProblem, Verdict,
    HESSIAN_STEP,
};
use manicorn::solver::{solve, SolveOptions, SolveStatus};
use manicorn_cli::report::SolveReport;
use manicorn_cli::{invariance_section, run, SECOND_ORDER_TOL};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

type Check = Result<(bool, String), String>;

/// Title, check and runtime budget.
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

struct Line {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

fn params(v: serde_json::Value) -> Params {
    v.as_object().cloned().unwrap_or_default()
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let tol = 1e-10 * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Reference point of a model, or a solved point when there is none.
fn certified_point(model: &Model) -> Result<DVector<f64>, String> {
    if let Some(r) = &model.reference {
        return Ok(r.point.clone());
    }
    let res = solve(&model.problem, &model.start, &SolveOptions::default()).map_err(err)?;
    if res.status != SolveStatus::Converged {
        return Err(format!(
            "{}: solver did not converge ({})",
            model.name, res.message
        ));
    }
    Ok(res.point)
}

fn all_models() -> Result<Vec<Model>, String> {
    models::registry()
        .iter()
        .map(|d| d.instantiate(&Params::new()).map_err(err))
        .collect()
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Check {
    let model =
        models::build("remark-counterexample", &params(json!({"alpha": 1.0}))).map_err(err)?;
    let prob = &model.problem;
    let p = DVector::zeros(2);
    let cert = solve_kkt(prob, &p, 1e-10).map_err(err)?;
    let mu_ok = (cert.mu_chart[0] - 1.0).abs() <= 1e-10
        && cert.mu_chart[1].abs() <= 1e-10
        && cert.stationarity_residual <= 1e-10;

    let form = |name: &str| -> Result<DMatrix<f64>, String> {
        let lm = model
            .linmaps
            .iter()
            .find(|l| l.name == name)
            .ok_or(format!("missing map {name}"))?;
        let r = prob.m.retraction(&p, 0).map_err(err)?;
        let pb = PulledBackProblem::with_maps(prob, &p, r, lm.clone()).map_err(err)?;
        Ok(lagrangian_hessian(&pb, &cert.mu_chart, HESSIAN_STEP)
            .map_err(err)?
            .matrix)
    };
    let quad = |h: &DMatrix<f64>, v: [f64; 2]| {
        let v = DVector::from_row_slice(&v);
        v.dot(&(h * &v))
    };
    let (h1, h2, h3) = (form("S01")?, form("S02")?, form("S03")?);
    let s01_ok = h1.amax() <= 1e-6;
    let s02_at_10 = quad(&h2, [1.0, 0.0]);
    let s02_at_01 = quad(&h2, [0.0, 1.0]);
    let s02_ok = (s02_at_10 - 2.0).abs() <= 1e-6;
    let s03_at_11 = quad(&h3, [1.0, 1.0]);
    let s03_ok = (s03_at_11 - 2.0).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut max_on = 0.0f64;
    for _ in 0..200 {
        let s = gauss(&mut rng);
        max_on = max_on.max((quad(&h1, [0.0, s]) - quad(&h3, [0.0, s])).abs());
    }
    let split = quad(&h3, [1.0, 1.0]) - quad(&h1, [1.0, 1.0]);
    let agree_ok = max_on <= 1e-8 && (split - 2.0).abs() <= 1e-6;

    let pass = mu_ok && s01_ok && s02_ok && s03_ok && agree_ok;
    Ok((
        pass,
        format!(
            "mu=({:.3e},{:.3e}) res={:.1e} [{}]; S01 max|H|={:.1e} [{}]; S02 H[(1,0)]={:.6} expected 2 [{}] (H[(0,1)]={:.6}); \
             S03 H[(1,1)]={:.6} [{}]; S01/S03 on {{v1=0}} max diff={:.1e}, diff at (1,1)={:.6} [{}]",
            cert.mu_chart[0],
            cert.mu_chart[1],
            cert.stationarity_residual,
            ok(mu_ok),
            h1.amax(),
            ok(s01_ok),
            s02_at_10,
            ok(s02_ok),
            s02_at_01,
            s03_at_11,
            ok(s03_ok),
            max_on,
            split,
            ok(agree_ok)
        ),
    ))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

/// Random sizes for a classical instance: `m ≤ 5`, `n_I ≤ 4`, `n_E ≤ 2`.
fn random_shape(rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize, usize, bool) {
    let m = rng.gen_range(1..=5);
    let n_i = rng.gen_range(0..=4);
    let n_e = rng.gen_range(0..=2usize.min(m));
    let n_active = rng.gen_range(0..=n_i.min(m - n_e));
    let n_weak = rng.gen_range(0..=n_active);
    (m, n_i, n_e, n_active, n_weak, rng.gen_bool(0.5))
}

/// Classical multipliers by least squares on the active gradients.
fn direct_multipliers(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    n_i: usize,
    active: &[bool],
) -> DVector<f64> {
    let eps = 1e-6;
    let m = x.len();
    let rows = prob.eval_g(x).len();
    let mut jac = DMatrix::zeros(rows, m);
    let mut grad = DVector::zeros(m);
    for k in 0..m {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += eps;
        xm[k] -= eps;
        jac.set_column(k, &((prob.eval_g(&xp) - prob.eval_g(&xm)) / (2.0 * eps)));
        grad[k] = (prob.eval_f(&xp) - prob.eval_f(&xm)) / (2.0 * eps);
    }
    let used: Vec<usize> = (0..rows).filter(|&j| j >= n_i || active[j]).collect();
    let mut eta = DVector::zeros(rows);
    if used.is_empty() {
        return eta;
    }
    let a = DMatrix::from_fn(m, used.len(), |r, c| jac[(used[c], r)]);
    let sol = a.svd(true, true).solve(&(-grad), 1e-12).expect("svd solve");
    for (c, &j) in used.iter().enumerate() {
        eta[j] = sol[c];
    }
    eta
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut worst_direct = 0.0f64;
    let mut label_errors = 0;
    let mut failures = Vec::new();
    let mut weak_total = 0;
    for trial in 0..200 {
        let (m, n_i, n_e, n_active, n_weak, nonlinear) = random_shape(&mut rng);
        weak_total += n_weak;
        let (prob, data) =
            classical_instance(m, n_i, n_e, n_active, n_weak, nonlinear, 1000 + trial)
                .map_err(err)?;
        let x = &data.x_star;
        let outcome = solve_kkt(&prob, x, TOL_KKT)
            .and_then(|c| classical_report(&c, &prob, x).map(|r| (c, r)));
        let (cert, rep) = match outcome {
            Ok(v) => v,
            Err(e) => {
                failures.push(format!("trial {trial}: {e}"));
                continue;
            }
        };
        let direct = direct_multipliers(&prob, x, n_i, &data.active);
        for j in 0..n_i {
            worst = worst.max((rep.eta_i[j] - data.eta_i[j]).abs());
            worst_direct = worst_direct.max((rep.eta_i[j] - direct[j]).abs());
        }
        for j in 0..n_e {
            worst = worst.max((rep.eta_e[j] - data.eta_e[j]).abs());
            worst_direct = worst_direct.max((rep.eta_e[j] - direct[n_i + j]).abs());
        }
        let strong = cert
            .activity
            .iter()
            .filter(|a| **a == Activity::Strong)
            .count();
        let weak = cert
            .activity
            .iter()
            .filter(|a| **a == Activity::Weak)
            .count();
        if rep.active != data.active || strong != n_active - n_weak || weak != n_weak {
            label_errors += 1;
        }
    }
    let pass = failures.is_empty() && worst <= 1e-8 && worst_direct <= 1e-6 && label_errors == 0;
    let mut detail = format!(
        "200 instances ({weak_total} weakly active rows): max |eta - planted| = {worst:.2e}, \
         max |eta - least squares| = {worst_direct:.2e}, labeling errors = {label_errors}"
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; errors: {}", failures.join("; ")));
    }
    Ok((pass, detail))
}

/// `g(x) = A x` with `rank A < rows` and a random sign pattern, at the origin.
fn degenerate_instance(rng: &mut ChaCha8Rng) -> ProblemInstance {
    let m = rng.gen_range(1..=4);
    let rows = rng.gen_range(2..=4);
    let r = rng.gen_range(1..rows);
    let a =
        DMatrix::from_fn(rows, r, |_, _| gauss(rng)) * DMatrix::from_fn(r, m, |_, _| gauss(rng));
    let signs: Vec<Sign> = (0..rows)
        .map(|_| match rng.gen_range(0..3) {
            0 => Sign::NonPos,
            1 => Sign::Zero,
            _ => Sign::Free,
        })
        .collect();
    let c = gauss_vec(rng, m);
    ProblemInstance::new(
        "degenerate-linear",
        Arc::new(Euclidean::new(m)),
        Arc::new(Euclidean::new(rows)),
        Arc::new(SignPattern::new(signs)),
        move |x| c.dot(x),
        move |x| &a * x,
    )
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases: Vec<(ProblemInstance, DVector<f64>)> = Vec::new();
    for trial in 0..200 {
        if trial % 2 == 0 {
            let (m, n_i, n_e, n_active, n_weak, nonlinear) = random_shape(&mut rng);
            let (prob, data) =
                classical_instance(m, n_i, n_e, n_active, n_weak, nonlinear, 5000 + trial)
                    .map_err(err)?;
            cases.push((prob, data.x_star));
        } else {
            let prob = degenerate_instance(&mut rng);
            let p = DVector::zeros(prob.m.ambient_dim());
            cases.push((prob, p));
        }
    }
    for model in all_models()? {
        let p = certified_point(&model)?;
        cases.push((model.problem, p));
    }
    let (mut disagree, mut chain, mut mfcq_true, mut mfcq_false) = (0, 0, 0, 0);
    let mut notes = Vec::new();
    for (prob, p) in &cases {
        let mfcq = check_mfcq(prob, p, 1e-9).map_err(err)?.0;
        let zkrcq = check_zkrcq(prob, p, 1e-9).map_err(err)?;
        let licq = check_licq(prob, p, 1e-9).map_err(err)?;
        let tr = check_transversality(prob, p, 1e-9).map_err(err)?;
        if mfcq {
            mfcq_true += 1;
        } else {
            mfcq_false += 1;
        }
        if mfcq != zkrcq {
            disagree += 1;
            notes.push(prob.name.clone());
        }
        if (licq && !zkrcq) || (zkrcq && !tr) {
            chain += 1;
            notes.push(format!("chain: {}", prob.name));
        }
    }
    let pass = disagree == 0 && chain == 0;
    let mut detail = format!(
        "{} instances (200 random + {} built-ins; MFCQ true {mfcq_true}, false {mfcq_false}): \
         MFCQ/ZKRCQ disagreements = {disagree}, chain violations = {chain}",
        cases.len(),
        cases.len() - 200
    );
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join(", ")));
    }
    Ok((pass, detail))
}

/// Distance of `w` to the boundary of `{a w ≤ 0, e w = 0}`, rows normalized; `w` is unit.
fn boundary_margin(a: &DMatrix<f64>, e: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let eq = (0..e.nrows())
        .filter(|&r| e.row(r).norm() > 1e-12)
        .map(|r| (e.row(r).dot(&w.transpose()) / e.row(r).norm()).abs())
        .fold(0.0, f64::max);
    if eq > 1e-12 {
        return eq;
    }
    (0..a.nrows())
        .filter(|&r| a.row(r).norm() > 1e-12)
        .map(|r| (a.row(r).dot(&w.transpose()) / a.row(r).norm()).abs())
        .fold(f64::INFINITY, f64::min)
}

const MARGIN: f64 = 0.05;
const ORACLE_TRIALS: usize = 12;

/// Oracle decisions against `inside` on 250 cone samples and 250 random directions away from the boundary.
fn compare_membership(
    prob: &ProblemInstance,
    p: &DVector<f64>,
    cone_phi: &PolyhedralCone,
    inside: &dyn Fn(&DVector<f64>) -> Result<bool, String>,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, usize), String> {
    let dim = cone_phi.dim;
    let (mut checked, mut mismatches, mut skipped) = (0, 0, 0);
    for i in 0..500 {
        let v = if i % 2 == 0 {
            match sample_cone(cone_phi, rng).map_err(err)? {
                Some(v) => v,
                None => DVector::zeros(dim),
            }
        } else {
            let v = gauss_vec(rng, dim).normalize();
            if boundary_margin(&cone_phi.a_i, &cone_phi.a_e, &v) < MARGIN {
                skipped += 1;
                continue;
            }
            v
        };
        let expected = inside(&v)?;
        let oracle = tangent_cone_oracle(prob, p, &v, ORACLE_TRIALS).map_err(err)?;
        checked += 1;
        if expected != oracle {
            mismatches += 1;
        }
    }
    Ok((checked, mismatches, skipped))
}

fn criterion_4() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for model in all_models()? {
        let prob = &model.problem;
        let p = certified_point(&model)?;
        let cert = solve_kkt(prob, &p, TOL_KKT).map_err(err)?;
        let inv = invariance_section(&model, &p, &cert, 200, 4).map_err(err)?;
        let max_res = inv
            .representations
            .iter()
            .map(|r| r.stationarity_residual.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        let adapted: Vec<_> = inv.pairs.iter().filter(|x| x.adapted).collect();
        let max_on = adapted.iter().map(|x| x.max_on_cone).fold(0.0, f64::max);
        let a_ok = max_res <= 1e-7;
        let b_ok = max_on <= 1e-5;

        let lm = LocalModel::at(prob, &p, Rep::default()).map_err(err)?;
        let lin = lm.linearizing_cone().map_err(err)?;
        let inside = |v: &DVector<f64>| lin.contains(v, 1e-9).map_err(err);
        let (checked, mismatches, skipped) = compare_membership(prob, &p, &lin, &inside, &mut rng)?;
        let c_ok = mismatches == 0;
        pass &= a_ok && b_ok && c_ok;
        parts.push(format!(
            "{}: KKT res {:.1e} over {} reps [{}], on-cone Hessian diff {:.1e} over {} pairs [{}], cone {}/{} agree ({} skipped) [{}]",
            model.name,
            max_res,
            inv.representations.len(),
            ok(a_ok),
            max_on,
            adapted.len(),
            ok(b_ok),
            checked - mismatches,
            checked,
            skipped,
            ok(c_ok)
        ));
    }
    Ok((pass, parts.join("\n         ")))
}

fn sphere_point(colat: f64, lon: f64) -> DVector<f64> {
    DVector::from_vec(vec![
        colat.sin() * lon.cos(),
        colat.sin() * lon.sin(),
        colat.cos(),
    ])
}

fn criterion_5() -> Check {
    let defaults = models::find("sphere-polygon")
        .ok_or("no sphere-polygon model")?
        .defaults;
    let verts: Vec<DVector<f64>> =
        serde_json::from_value::<Vec<Vec<f64>>>(defaults["vertices"].clone())
            .map_err(err)?
            .into_iter()
            .map(DVector::from_vec)
            .collect();
    let poly = SphericalPolygon::new(verts.clone()).map_err(err)?;
    let centroid = verts
        .iter()
        .fold(DVector::zeros(3), |a, v| a + v)
        .normalize();
    let radius = verts
        .iter()
        .map(|v| v.dot(&centroid).clamp(-1.0, 1.0).acos())
        .fold(0.0, f64::max)
        + 0.01;
    let mut region = vec![GridRegion::SphereCap {
        center: centroid,
        radius,
    }];
    for i in 0..verts.len() {
        region.push(GridRegion::GeodesicArc {
            from: verts[i].clone(),
            to: verts[(i + 1) % verts.len()].clone(),
        });
    }
    let region = GridRegion::Union(region);

    let dir = std::env::temp_dir().join(format!("manicorn-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut max_iter, mut max_gap, mut bad) = (0usize, 0.0f64, Vec::new());
    for k in 0..20 {
        let t = sphere_point(rng.gen_range(0.7..1.3), rng.gen_range(0.0..2.0 * PI));
        let cfg = dir.join(format!("target{k}.cfg"));
        std::fs::write(
            &cfg,
            format!(
                "model.name = \"sphere-polygon\"\nmodel.target = [{}, {}, {}]\noutput = \"json\"\n",
                t[0], t[1], t[2]
            ),
        )
        .map_err(err)?;
        let out = run(["manicorn", "solve", "--config", cfg.to_str().unwrap()]);
        let report: SolveReport = serde_json::from_str(&out.stdout)
            .map_err(|e| format!("target {k}: {e}: {}", out.stderr))?;
        let point = DVector::from_vec(report.point.clone());
        let model = models::build(
            "sphere-polygon",
            &params(json!({"target": [t[0], t[1], t[2]]})),
        )
        .map_err(err)?;
        let (grid_x, grid_f) = grid_minimize(&model.problem, &region, 1e-3).map_err(err)?;
        let f = report.objective.unwrap_or(f64::INFINITY);
        let gap = (f - grid_f).abs();
        let certificate =
            solve_kkt(&model.problem, &point, TOL_KKT).is_ok() && report.certificate.is_some();
        let edges_solver = active_edges_by_distance(&poly, &point, 1e-6);
        let edges_grid = active_edges_by_distance(&poly, &grid_x, 2e-3);
        let edges_ref = poly.active_edges(&poly.nearest_point(&t));
        max_iter = max_iter.max(report.iterations.len());
        max_gap = max_gap.max(gap);
        let good = report.status == "converged"
            && report.iterations.len() <= 50
            && gap <= 1e-4
            && certificate
            && edges_solver == edges_grid
            && edges_solver == edges_ref;
        if !good {
            bad.push(format!(
                "target {k}: status {} iters {} gap {gap:.1e} cert {certificate} edges {:?}/{:?}/{:?}",
                report.status,
                report.iterations.len(),
                edges_solver,
                edges_grid,
                edges_ref
            ));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    let mut detail = format!(
        "20 targets: max iterations {max_iter}, max |f - grid| = {max_gap:.1e}, failures = {}",
        bad.len()
    );
    if !bad.is_empty() {
        detail.push_str(&format!(" [{}]", bad.join("; ")));
    }
    Ok((bad.is_empty(), detail))
}

/// Edges whose great circle is within `tol` of `x`.
fn active_edges_by_distance(poly: &SphericalPolygon, x: &DVector<f64>, tol: f64) -> Vec<usize> {
    poly.normals()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.dot(x).abs() / n.norm() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Direct solve of the optimality system `y − y_d + Qλ = 0`, `αu − λ = 0`, `Qy − u = 0`.
fn direct_adjoint(n: usize, alpha: f64, s: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let q = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * s,
        1 => -s,
        _ => 0.0,
    });
    let y_d = DVector::from_fn(n, |i, _| (PI * (i + 1) as f64 / (n + 1) as f64).sin());
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    let mut b = DVector::zeros(3 * n);
    a.view_mut((0, 0), (n, n)).fill_with_identity();
    a.view_mut((0, 2 * n), (n, n)).copy_from(&q);
    b.rows_mut(0, n).copy_from(&y_d);
    a.view_mut((n, n), (n, n)).fill_diagonal(alpha);
    a.view_mut((n, 2 * n), (n, n)).fill_diagonal(-1.0);
    a.view_mut((2 * n, 0), (n, n)).copy_from(&q);
    a.view_mut((2 * n, n), (n, n)).fill_diagonal(-1.0);
    let x = a.lu().solve(&b).expect("nonsingular optimality system");
    (
        x.rows(0, n).into_owned(),
        x.rows(n, n).into_owned(),
        x.rows(2 * n, n).into_owned(),
    )
}

fn criterion_6() -> Check {
    let n = 20;
    let (alpha, s) = (1e-2, 1.0);
    let model = models::build(
        "control-chain",
        &params(json!({"n_nodes": n, "alpha": alpha, "stiffness": s, "beta": 0.0})),
    )
    .map_err(err)?;
    let prob = &model.problem;
    let (y, u, lambda) = direct_adjoint(n, alpha, s);
    let adj = AdjointSolution::solve(n, alpha, s).map_err(err)?;
    let helper_gap = (&adj.y - &y)
        .amax()
        .max((&adj.u - &u).amax())
        .max((&adj.lambda - &lambda).amax());

    let res = solve(prob, &model.start, &SolveOptions::default()).map_err(err)?;
    let py = res.point.rows(0, n).into_owned();
    let pu = res.point.rows(n, n).into_owned();
    let state_gap = (&py - &y).amax().max((&pu - &u).amax());
    let cert = solve_kkt(prob, &res.point, TOL_KKT).map_err(err)?;
    let classical = classical_report(&cert, prob, &res.point).map_err(err)?;
    let adjoint_gap = (&classical.eta_e - &lambda).amax();
    let chart_gap = (cert.mu_chart.rows(n, n) - &lambda).amax();
    let leak = cert.mu_chart.rows(0, n).amax().max(classical.free_leak);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut licq_mismatch = 0;
    let mut points = vec![(0.0, res.point.clone())];
    for _ in 0..10 {
        let beta = rng.gen_range(0.0..2.0);
        let yy = gauss_vec(&mut rng, n);
        let q = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 * s,
            1 => -s,
            _ => 0.0,
        });
        let uu = &q * &yy + yy.map(|v| beta * v * v * v);
        let p = DVector::from_iterator(2 * n, yy.iter().chain(uu.iter()).copied());
        points.push((beta, p));
    }
    for (beta, p) in &points {
        let model = models::build(
            "control-chain",
            &params(json!({"n_nodes": n, "alpha": alpha, "stiffness": s, "beta": beta})),
        )
        .map_err(err)?;
        let licq = check_licq(&model.problem, p, 1e-9).map_err(err)?;
        let mut c = DMatrix::zeros(n, 2 * n);
        for i in 0..n {
            c[(i, i)] = 2.0 * s + 3.0 * beta * p[i] * p[i];
            if i > 0 {
                c[(i, i - 1)] = -s;
            }
            if i + 1 < n {
                c[(i, i + 1)] = -s;
            }
            c[(i, n + i)] = -1.0;
        }
        if licq != (rank(&c) == n) {
            licq_mismatch += 1;
        }
    }
    let pass = res.status == SolveStatus::Converged
        && state_gap <= 1e-8
        && adjoint_gap <= 1e-8
        && chart_gap <= 1e-8
        && leak <= 1e-10
        && licq_mismatch == 0;
    Ok((
        pass,
        format!(
            "N={n}: solver status {}, |(y,u) - direct| = {state_gap:.1e}, |lambda - direct| = {adjoint_gap:.1e} \
             (chart {chart_gap:.1e}), T*Y leak = {leak:.1e}, LICQ/rank mismatches = {licq_mismatch}/{}, \
             helper vs direct = {helper_gap:.1e}",
            res.status.name(),
            points.len()
        ),
    ))
}

fn criterion_7() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();

    let cqp = models::build("convex-qp", &Params::new()).map_err(err)?;
    let p = certified_point(&cqp)?;
    let cert = solve_kkt(&cqp.problem, &p, TOL_KKT).map_err(err)?;
    let cc = critical_cone(&cqp.problem, &p, &cert).map_err(err)?;
    let h = lagrangian_hessian(
        &PulledBackProblem::new(&cqp.problem, &p, 0, 0).map_err(err)?,
        &cert.mu_chart,
        HESSIAN_STEP,
    )
    .map_err(err)?;
    let v = sosc_check(&h, &cc, SECOND_ORDER_TOL).map_err(err)?;
    pass &= v.holds();
    parts.push(format!("convex-qp SOSC {}", verdict_str(&v)));

    let iqp = models::build("indefinite-qp", &Params::new()).map_err(err)?;
    let p = DVector::zeros(3);
    let cert = solve_kkt(&iqp.problem, &p, TOL_KKT).map_err(err)?;
    let cc = critical_cone(&iqp.problem, &p, &cert).map_err(err)?;
    let h = lagrangian_hessian(
        &PulledBackProblem::new(&iqp.problem, &p, 0, 0).map_err(err)?,
        &cert.mu_chart,
        HESSIAN_STEP,
    )
    .map_err(err)?;
    let v = sosc_check(&h, &cc, SECOND_ORDER_TOL).map_err(err)?;
    let witness_ok = match &v {
        Verdict::Fails { witness, value } => {
            cc.cone_m.contains(witness, 1e-9).map_err(err)?
                && h.quad(witness) < -1e-6
                && *value < -1e-6
        }
        _ => false,
    };
    pass &= witness_ok;
    parts.push(format!(
        "indefinite-qp SOSC {} [witness {}]",
        verdict_str(&v),
        ok(witness_ok)
    ));

    let mut compared = Vec::new();
    let mut skipped = Vec::new();
    for model in all_models()? {
        let prob = &model.problem;
        let p = certified_point(&model)?;
        let cert = solve_kkt(prob, &p, TOL_KKT).map_err(err)?;
        let cc = critical_cone(prob, &p, &cert).map_err(err)?;
        let pb = PulledBackProblem::new(prob, &p, 0, 0).map_err(err)?;
        let h = lagrangian_hessian(&pb, &cert.mu_chart, HESSIAN_STEP).map_err(err)?;
        let v = sosc_check(&h, &cc, SECOND_ORDER_TOL).map_err(err)?;
        match cone_quadratic_minimum(&h.matrix, &cc.cone_m, 1e-3) {
            Ok(grid) => {
                let grid_holds = grid.as_ref().is_none_or(|(_, m)| *m > SECOND_ORDER_TOL);
                let agree = grid_holds == v.holds();
                pass &= agree;
                let gm = grid.map_or("trivial".to_string(), |(_, m)| format!("{m:.3e}"));
                compared.push(format!(
                    "{} (grid min {gm}, SOSC {}) [{}]",
                    model.name,
                    verdict_str(&v),
                    ok(agree)
                ));
            }
            Err(manicorn::Error::DimensionTooLarge(d, _)) => {
                skipped.push(format!("{} (dim {d})", model.name))
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    parts.push(format!("grid agreement: {}", compared.join(", ")));
    if !skipped.is_empty() {
        parts.push(format!("C_M above grid dimension: {}", skipped.join(", ")));
    }
    Ok((pass, parts.join("\n         ")))
}

fn verdict_str(v: &Verdict) -> String {
    match v {
        Verdict::Holds { min_value } => format!("holds (min {min_value:.3e})"),
        Verdict::Fails { value, .. } => format!("fails (H[v,v] = {value:.3e})"),
        Verdict::Inconclusive { reason } => format!("inconclusive ({reason})"),
    }
}

fn set_problem(k: Arc<dyn CornerSet>) -> ProblemInstance {
    let m = k.ambient();
    ProblemInstance::new(
        format!("id into {}", k.name()),
        m.clone(),
        m,
        k,
        |_| 0.0,
        |p| p.clone(),
    )
}

fn criterion_8() -> Check {
    let s2: Arc<dyn Manifold> = Arc::new(Sphere::new(2));
    let tri: Vec<DVector<f64>> = (0..3)
        .map(|i| sphere_point(0.6, 2.0 * PI * i as f64 / 3.0))
        .collect();
    let poly: Arc<dyn CornerSet> = Arc::new(SphericalPolygon::new(tri.clone()).map_err(err)?);
    let edge_mid = (&tri[0] + &tri[1]).normalize();
    let facets = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, -0.3, -0.5, -0.5, 1.0]);
    let cone_set: Arc<dyn CornerSet> =
        Arc::new(ConeSet::new(facets, DMatrix::zeros(0, 3)).map_err(err)?);
    let sign: Arc<dyn CornerSet> = Arc::new(SignPattern::new(vec![
        Sign::NonPos,
        Sign::NonPos,
        Sign::Zero,
        Sign::Free,
    ]));
    let pq = DVector::from_vec(vec![1.0, 2.0, 3.0]).normalize();
    let diag: Arc<dyn CornerSet> = Arc::new(Diagonal::new(s2.clone()));
    let whole: Arc<dyn CornerSet> = Arc::new(Whole::new(s2.clone()));
    let prod: Arc<dyn CornerSet> = Arc::new(ProductSet::new(
        poly.clone(),
        Arc::new(SignPattern::new(vec![Sign::NonPos, Sign::Zero])),
    ));

    let cases: Vec<(&str, Arc<dyn CornerSet>, DVector<f64>)> = vec![
        ("SignPattern", sign, DVector::zeros(4)),
        ("ConeSet", cone_set, DVector::zeros(3)),
        ("SphericalPolygon vertex", poly.clone(), tri[0].clone()),
        ("SphericalPolygon edge", poly, edge_mid),
        (
            "Diagonal(S2)",
            diag,
            DVector::from_iterator(6, pq.iter().chain(pq.iter()).copied()),
        ),
        ("Whole(S2)", whole, pq.clone()),
        (
            "ProductSet",
            prod,
            DVector::from_iterator(5, tri[1].iter().copied().chain([0.0, 0.0])),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, k, q) in cases {
        let prob = set_problem(k.clone());
        let lm = LocalModel::at(&prob, &q, Rep::default()).map_err(err)?;
        let inner = inner_tangent_cone(k.as_ref(), &q).map_err(err)?;
        let cone_phi = inner.preimage(&lm.g_prime).map_err(err)?;
        let g_prime = lm.g_prime.clone();
        let inside = |v: &DVector<f64>| inner.contains(&(&g_prime * v), 1e-9).map_err(err);
        let (checked, mismatches, skipped) =
            compare_membership(&prob, &q, &cone_phi, &inside, &mut rng)?;
        pass &= mismatches == 0;
        parts.push(format!(
            "{label}: {}/{checked} agree ({skipped} skipped)",
            checked - mismatches
        ));
    }
    Ok((pass, parts.join(", ")))
}

fn criterion_9() -> Check {
    let runs: [&[&str]; 4] = [
        &[
            "certify",
            "--model",
            "remark-counterexample",
            "--point",
            "0,0",
            "--seed",
            "11",
            "--output",
            "json",
        ],
        &[
            "solve",
            "--model",
            "control-chain",
            "--seed",
            "11",
            "--output",
            "json",
        ],
        &[
            "invariance",
            "--model",
            "sphere-polygon",
            "--seed",
            "11",
            "--output",
            "json",
        ],
        &[
            "invariance",
            "--model",
            "diagonal-constraint",
            "--seed",
            "11",
            "--output",
            "json",
        ],
    ];
    let mut same = 0;
    let mut bytes = 0;
    for args in runs {
        let argv = || std::iter::once("manicorn").chain(args.iter().copied());
        let (a, b) = (run(argv()), run(argv()));
        bytes += a.stdout.len();
        if a.stdout == b.stdout && a.code == b.code && !a.stdout.is_empty() {
            same += 1;
        }
    }
    Ok((
        same == runs.len(),
        format!(
            "{same}/{} command pairs byte-identical ({bytes} bytes)",
            runs.len()
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "remark fixture exactness",
            criterion_1,
            Some(Duration::from_secs(1)),
        ),
        (
            "classical reduction",
            criterion_2,
            Some(Duration::from_secs(30)),
        ),
        ("CQ equivalence and chain", criterion_3, None),
        ("chart/retraction invariance", criterion_4, None),
        (
            "sphere polygon end-to-end",
            criterion_5,
            Some(Duration::from_secs(60)),
        ),
        ("control adjoint check", criterion_6, None),
        ("second-order verdicts", criterion_7, None),
        ("tangent cone on K", criterion_8, None),
        ("determinism", criterion_9, None),
    ];
    let mut lines = Vec::new();
    for (i, (title, f, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let (mut pass, mut detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > b {
                pass = false;
                detail.push_str(&format!("; runtime over budget {:.0} s", b.as_secs_f64()));
            }
        }
        let line = Line {
            id: i + 1,
            title,
            pass,
            detail,
            elapsed,
        };
        println!(
            "[{}] {} {} ({:.2} s)\n         {}",
            if line.pass { "PASS" } else { "FAIL" },
            line.id,
            line.title,
            line.elapsed.as_secs_f64(),
            line.detail
        );
        lines.push(line);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        lines.len() - failed.len(),
        lines.len()
    );
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use manicorn::firstorder::{
    check_cqs, classical_report, solve_kkt, solve_kkt_in, KKTCertificate, TOL_KKT,
};
use manicorn::models::{self, Model};
use manicorn::problem::{ProblemInstance, Rep};
use manicorn::secondorder::{
    critical_cone, invariance_check, lagrangian_hessian, sonc_check, sosc_check, PulledBackProblem,
    HESSIAN_STEP,
};
use manicorn::solver::{solve, SolveStatus};
use manicorn::Error;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

use crate::config::{parse_config, ConfigMap, OutputFormat, Overrides, RunConfig};
use crate::report::*;
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_BREAKDOWN: i32 = 4;

/// Tolerance of the SOSC/SONC verdicts.
pub const SECOND_ORDER_TOL: f64 = 1e-6;
/// On-cone Hessian discrepancy allowed between adapted pull-backs.
pub const INVARIANCE_TOL: f64 = 1e-5;
/// KKT residual allowed in alternate representations.
pub const REPRESENTATION_TOL: f64 = 1e-7;

#[derive(Debug, Parser)]
#[command(
    name = "manicorn",
    version,
    about = "Optimality conditions for problems g(p) ∈ K on manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List built-in models whose name contains FILTER.
    ListModels {
        filter: Option<String>,
        #[arg(long)]
        output: Option<String>,
    },
    /// Constraint qualifications and KKT certificate at a point.
    Check(CommonArgs),
    /// KKT, critical cone, Lagrangian Hessian, SOSC/SONC and invariance at a point.
    Certify(CommonArgs),
    /// Run the local solver from a start point.
    Solve(CommonArgs),
    /// Compare KKT data and Hessians across representations at a point.
    Invariance(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// text or json.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

/// Exit code and captured output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Run the command line `argv` (including the program name).
pub fn run<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    match cli.command {
        Command::ListModels { filter, output } => list_models(filter.as_deref(), output.as_deref()),
        Command::Check(a) => dispatch("check", &a, cmd_check),
        Command::Certify(a) => dispatch("certify", &a, cmd_certify),
        Command::Solve(a) => dispatch("solve", &a, cmd_solve),
        Command::Invariance(a) => dispatch("invariance", &a, cmd_invariance),
    }
}

fn emit<T: Serialize>(format: OutputFormat, report: &T, text: impl FnOnce() -> String) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        OutputFormat::Text => text(),
    }
}

type CmdFn = fn(&RunConfig, &Model) -> Result<(i32, String), CliError>;

fn dispatch(name: &str, args: &CommonArgs, cmd: CmdFn) -> Outcome {
    let wants_json = args.output.as_deref() == Some("json");
    let fail = |e: CliError, json: bool| {
        let code = e.exit_code();
        let msg = e.to_string();
        let stdout = if json {
            let r = ErrorReport {
                schema_version: SCHEMA_VERSION,
                command: name.into(),
                exit_code: code,
                error: msg.clone(),
            };
            format!(
                "{}\n",
                serde_json::to_string_pretty(&r).expect("reports serialize")
            )
        } else {
            String::new()
        };
        Outcome {
            code,
            stdout,
            stderr: format!("error: {msg}\n"),
        }
    };
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => return fail(e, wants_json),
    };
    let json = cfg.output == OutputFormat::Json;
    let model = match models::build(&cfg.model, &cfg.params) {
        Ok(m) => m,
        Err(e) => return fail(CliError::Config(e.to_string()), json),
    };
    match cmd(&cfg, &model) {
        Ok((code, stdout)) => Outcome {
            code,
            stdout,
            stderr: String::new(),
        },
        Err(e) => fail(e, json),
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let map = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ConfigMap::new(),
    };
    let ov = Overrides {
        model: args.model.clone(),
        point: args.point.clone(),
        seed: args.seed,
        output: args.output.clone(),
        tol: args.tol,
    };
    RunConfig::resolve(&map, &ov)
}

fn list_models(filter: Option<&str>, output: Option<&str>) -> Outcome {
    let format = match OutputFormat::parse(output.unwrap_or("text")) {
        Ok(f) => f,
        Err(e) => {
            return Outcome {
                code: EXIT_CONFIG,
                stdout: String::new(),
                stderr: format!("error: {e}\n"),
            }
        }
    };
    let schemas = models::schemas();
    let entries: Vec<ModelEntry> = models::registry()
        .into_iter()
        .filter(|d| filter.is_none_or(|f| d.name.contains(f)))
        .map(|d| ModelEntry {
            name: d.name.into(),
            summary: d.summary.into(),
            params: d.defaults.clone(),
            schema: schemas[d.name]
                .iter()
                .map(|(k, v)| (k.clone(), Value::from(*v)))
                .collect(),
            has_reference: d.has_reference,
        })
        .collect();
    let report = ListReport {
        schema_version: SCHEMA_VERSION,
        command: "list-models".into(),
        models: entries,
    };
    let stdout = emit(format, &report, || {
        let mut s = String::new();
        for m in &report.models {
            let params: Vec<String> = m
                .schema
                .iter()
                .map(|(k, v)| format!("{k}:{}", v.as_str().unwrap_or("?")))
                .collect();
            let reference = if m.has_reference {
                "reference"
            } else {
                "no reference"
            };
            let _ = writeln!(
                s,
                "{:<22} {} [{}] ({reference})",
                m.name,
                m.summary,
                params.join(", ")
            );
        }
        s
    });
    Outcome {
        code: EXIT_OK,
        stdout,
        stderr: String::new(),
    }
}

fn required_point(cfg: &RunConfig, prob: &ProblemInstance) -> Result<DVector<f64>, CliError> {
    let p = cfg
        .point
        .as_ref()
        .ok_or_else(|| CliError::Config("no point given (use --point or `point`)".into()))?;
    checked_point(p, prob)
}

fn checked_point(p: &[f64], prob: &ProblemInstance) -> Result<DVector<f64>, CliError> {
    let dim = prob.m.ambient_dim();
    if p.len() != dim {
        return Err(CliError::Config(format!(
            "point has {} coordinates, model `{}` needs {dim}",
            p.len(),
            prob.name
        )));
    }
    let p = DVector::from_column_slice(p);
    if !prob.m.contains(&p, 1e-8) {
        return Err(CliError::Config(format!(
            "point is not on {}",
            prob.m.name()
        )));
    }
    Ok(p)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check_core(
    command: &str,
    cfg: &RunConfig,
    model: &Model,
    p: &DVector<f64>,
) -> Result<(CheckReport, Option<KKTCertificate>), CliError> {
    let prob = &model.problem;
    prob.ensure_feasible(p)?;
    let tol = cfg.tol.unwrap_or(TOL_KKT);
    let cq = check_cqs(prob, p, Rep::default(), tol)?;
    let (kkt, no_multiplier, cert) = match solve_kkt(prob, p, tol) {
        Ok(c) => (Some(KktJson::from(&c)), None, Some(c)),
        Err(Error::NoMultiplier { residual, tol }) => {
            (None, Some(NoMultiplierJson { residual, tol }), None)
        }
        Err(e) => return Err(e.into()),
    };
    let classical = cert
        .as_ref()
        .and_then(|c| classical_report(c, prob, p).ok())
        .map(|c| ClassicalJson::from(&c));
    let report = CheckReport {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        model: model.name.clone(),
        params: model.params.clone(),
        point: vec_of(p),
        tol,
        constraint_qualifications: CqJson::from(&cq),
        kkt_holds: kkt.is_some(),
        kkt,
        no_multiplier,
        classical,
    };
    Ok((report, cert))
}

fn check_text(r: &CheckReport) -> String {
    let mut s = String::new();
    let cq = &r.constraint_qualifications;
    let _ = writeln!(s, "model      {} at {}", r.model, fmt_vec(&r.point));
    let _ = writeln!(
        s,
        "CQs        transversal={} zkrcq={} mfcq={} licq={} (n={}, k={}, ell={})",
        cq.transversal,
        cq.zkrcq,
        cq.mfcq,
        cq.licq,
        cq.rank_data.n,
        cq.rank_data.k,
        cq.rank_data.ell
    );
    match (&r.kkt, &r.no_multiplier) {
        (Some(k), _) => {
            let _ = writeln!(
                s,
                "KKT        holds, residual {:.3e}",
                k.stationarity_residual
            );
            let _ = writeln!(s, "mu         {}", fmt_vec(&k.mu_chart));
            if !k.activity.is_empty() {
                let _ = writeln!(s, "activity   {}", k.activity.join(" "));
            }
        }
        (None, Some(nm)) => {
            let _ = writeln!(
                s,
                "KKT        NoMultiplier: residual {:.3e} > tol {:.3e}",
                nm.residual, nm.tol
            );
        }
        _ => {}
    }
    if let Some(c) = &r.classical {
        let _ = writeln!(s, "eta_I      {}", fmt_vec(&c.eta_i));
        let _ = writeln!(s, "eta_E      {}", fmt_vec(&c.eta_e));
    }
    s
}

fn cmd_check(cfg: &RunConfig, model: &Model) -> Result<(i32, String), CliError> {
    let p = required_point(cfg, &model.problem)?;
    let (report, _) = check_core("check", cfg, model, &p)?;
    let code = if report.kkt_holds { EXIT_OK } else { EXIT_FAIL };
    Ok((code, emit(cfg.output, &report, || check_text(&report))))
}

/// Hessian comparison of every adapted pull-back against the primary one, plus KKT residuals per representation.
pub fn invariance_section(
    model: &Model,
    p: &DVector<f64>,
    cert: &KKTCertificate,
    samples: usize,
    seed: u64,
) -> Result<InvarianceJson, CliError> {
    let prob = &model.problem;
    let cc = critical_cone(prob, p, cert)?;
    let mu = &cert.mu_chart;
    let base = PulledBackProblem::new(prob, p, 0, 0)?;
    let h0 = lagrangian_hessian(&base, mu, HESSIAN_STEP)?;
    let r_names = prob.m.retraction_names();
    let a_names = prob.k.adapted_variant_names();
    let mut pairs = Vec::new();
    for (r, rn) in r_names.iter().enumerate() {
        for (a, an) in a_names.iter().enumerate() {
            if r == 0 && a == 0 {
                continue;
            }
            let pb = PulledBackProblem::new(prob, p, r, a)?;
            let h = lagrangian_hessian(&pb, mu, HESSIAN_STEP)?;
            let rep = invariance_check(&cc, &h0, &h, samples, INVARIANCE_TOL, seed)?;
            pairs.push(PairJson::new(rn, an, true, &rep));
        }
    }
    let q = prob.eval_g(p);
    for lm in &model.linmaps {
        if (&lm.base - &q).amax() > 1e-12 {
            continue;
        }
        let retraction = prob.m.retraction(p, 0)?;
        let pb = PulledBackProblem::with_maps(prob, p, retraction, lm.clone())?;
        let h = lagrangian_hessian(&pb, mu, HESSIAN_STEP)?;
        let rep = invariance_check(&cc, &h0, &h, samples, INVARIANCE_TOL, seed)?;
        pairs.push(PairJson::new(
            &r_names[0],
            &lm.name,
            lm.adapted_to.is_some(),
            &rep,
        ));
    }
    let mut representations = Vec::new();
    for (c, cn) in prob.m.chart_names().iter().enumerate() {
        for (a, an) in a_names.iter().enumerate() {
            let (residual, error) =
                match solve_kkt_in(prob, p, Rep::new(c, 0, a), REPRESENTATION_TOL) {
                    Ok(k) => (Some(k.stationarity_residual), None),
                    Err(e) => (None, Some(e.to_string())),
                };
            representations.push(RepResidualJson {
                chart: cn.clone(),
                retraction: r_names[0].clone(),
                adapted_chart: an.clone(),
                stationarity_residual: residual,
                error,
            });
        }
    }
    let pass = pairs.iter().all(|x| x.pass || !x.adapted)
        && representations.iter().all(|r| {
            r.stationarity_residual
                .is_some_and(|x| x <= REPRESENTATION_TOL)
        });
    Ok(InvarianceJson {
        tol: INVARIANCE_TOL,
        pairs,
        representations,
        pass,
    })
}

fn invariance_text(inv: &InvarianceJson) -> String {
    let mut s = String::new();
    for p in &inv.pairs {
        let tag = if p.adapted { "" } else { " (not adapted)" };
        let _ = writeln!(
            s,
            "  {}/{}{}: on-cone {:.3e}, off-cone {:.3e} {}",
            p.retraction,
            p.linearizing_map,
            tag,
            p.max_on_cone,
            p.max_off_cone,
            if p.pass { "ok" } else { "DIFFERS" }
        );
    }
    for r in &inv.representations {
        let v = r.stationarity_residual.map_or_else(
            || r.error.clone().unwrap_or_default(),
            |x| format!("{x:.3e}"),
        );
        let _ = writeln!(s, "  KKT in {}/{}: {v}", r.chart, r.adapted_chart);
    }
    let _ = writeln!(s, "invariance {}", if inv.pass { "pass" } else { "FAIL" });
    s
}

fn verdict_text(name: &str, v: &VerdictJson) -> String {
    match v.outcome.as_str() {
        "holds" => format!(
            "{name:<10} holds (min {})\n",
            v.min_value.map_or("n/a".into(), |x| format!("{x:.6e}"))
        ),
        "fails" => format!(
            "{name:<10} fails: H[v,v] = {:.6e} at v = {}\n",
            v.min_value.unwrap_or(f64::NAN),
            fmt_vec(v.witness.as_deref().unwrap_or(&[]))
        ),
        _ => format!(
            "{name:<10} inconclusive: {}\n",
            v.reason.clone().unwrap_or_default()
        ),
    }
}

fn cmd_certify(cfg: &RunConfig, model: &Model) -> Result<(i32, String), CliError> {
    let prob = &model.problem;
    let p = required_point(cfg, prob)?;
    let (check, cert) = check_core("certify", cfg, model, &p)?;
    let mut report = CertifyReport {
        check,
        critical_cone_m: None,
        critical_cone_n: None,
        hessian: None,
        sosc: None,
        sonc: None,
        invariance: None,
        second_order_error: None,
    };
    if let Some(cert) = &cert {
        let second = || -> Result<_, CliError> {
            let cc = critical_cone(prob, &p, cert)?;
            let pb = PulledBackProblem::new(prob, &p, 0, 0)?;
            let h = lagrangian_hessian(&pb, &cert.mu_chart, HESSIAN_STEP)?;
            let sosc = sosc_check(&h, &cc, SECOND_ORDER_TOL)?;
            let sonc = sonc_check(&h, &cc, SECOND_ORDER_TOL)?;
            let inv = invariance_section(model, &p, cert, cfg.samples, cfg.seed)?;
            Ok((cc, h, sosc, sonc, inv))
        };
        match second() {
            Ok((cc, h, sosc, sonc, inv)) => {
                report.critical_cone_m = Some(ConeJson::from(&cc.cone_m));
                report.critical_cone_n = Some(ConeJson::from(&cc.cone_n));
                report.hessian = Some(HessianJson::from(&h));
                report.sosc = Some(VerdictJson::from(&sosc));
                report.sonc = Some(VerdictJson::from(&sonc));
                report.invariance = Some(inv);
            }
            Err(e) => report.second_order_error = Some(e.to_string()),
        }
    }
    let sonc_holds = report.sonc.as_ref().is_some_and(|v| v.holds);
    let code = if report.check.kkt_holds && sonc_holds {
        EXIT_OK
    } else {
        EXIT_FAIL
    };
    let stdout = emit(cfg.output, &report, || {
        let mut s = check_text(&report.check);
        if let Some(h) = &report.hessian {
            let _ = writeln!(s, "Hessian    ({})", h.representation);
            for row in &h.matrix {
                let _ = writeln!(s, "           {}", fmt_vec(row));
            }
        }
        if let Some(c) = &report.critical_cone_m {
            let _ = writeln!(
                s,
                "C_M        dim {}, {} inequalities, {} equalities",
                c.dim,
                c.inequalities.len(),
                c.equalities.len()
            );
        }
        if let Some(v) = &report.sosc {
            s.push_str(&verdict_text("SOSC", v));
        }
        if let Some(v) = &report.sonc {
            s.push_str(&verdict_text("SONC", v));
        }
        if let Some(inv) = &report.invariance {
            s.push_str(&invariance_text(inv));
        }
        if let Some(e) = &report.second_order_error {
            let _ = writeln!(s, "second order: {e}");
        }
        s
    });
    Ok((code, stdout))
}

fn cmd_solve(cfg: &RunConfig, model: &Model) -> Result<(i32, String), CliError> {
    let prob = &model.problem;
    let start = match &cfg.point {
        Some(p) => checked_point(p, prob)?,
        None => model.start.clone(),
    };
    let res = solve(prob, &start, &cfg.solver)?;
    let code = match res.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxIter => EXIT_FAIL,
        SolveStatus::Breakdown => EXIT_BREAKDOWN,
    };
    let report = SolveReport {
        schema_version: SCHEMA_VERSION,
        command: "solve".into(),
        model: model.name.clone(),
        params: model.params.clone(),
        start: vec_of(&start),
        hessian_mode: cfg.solver.hessian_mode.name().into(),
        status: res.status.name().into(),
        message: res.message.clone(),
        point: vec_of(&res.point),
        objective: fin(prob.eval_f(&res.point)),
        iterations: res.iterations.iter().map(IterJson::from).collect(),
        certificate: res.certificate.as_ref().map(KktJson::from),
    };
    let stdout = emit(cfg.output, &report, || {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>14} {:>10} {:>10} {:>10} {:>8}",
            "iter", "f", "kkt", "feas", "step", "alpha"
        );
        let num = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3e}"));
        for it in &report.iterations {
            let _ = writeln!(
                s,
                "{:>4} {:>14} {:>10} {:>10} {:>10} {:>8}",
                it.iter,
                it.f.map_or("-".into(), |v| format!("{v:.8e}")),
                num(it.kkt_residual),
                num(it.feasibility),
                num(it.step_norm),
                it.step_length.map_or("-".into(), |v| format!("{v:.3}"))
            );
        }
        let _ = writeln!(s, "status     {} ({})", report.status, report.message);
        let _ = writeln!(s, "point      {}", fmt_vec(&report.point));
        let _ = writeln!(s, "objective  {}", num(report.objective));
        if let Some(c) = &report.certificate {
            let _ = writeln!(s, "mu         {}", fmt_vec(&c.mu_chart));
        }
        s
    });
    Ok((code, stdout))
}

fn cmd_invariance(cfg: &RunConfig, model: &Model) -> Result<(i32, String), CliError> {
    let prob = &model.problem;
    let p = match (&cfg.point, &model.reference) {
        (Some(p), _) => checked_point(p, prob)?,
        (None, Some(r)) => r.point.clone(),
        (None, None) => {
            return Err(CliError::Config(
                "no point given and the model has no reference point".into(),
            ))
        }
    };
    prob.ensure_feasible(&p)?;
    let cert = solve_kkt(prob, &p, cfg.tol.unwrap_or(TOL_KKT))?;
    let inv = invariance_section(model, &p, &cert, cfg.samples, cfg.seed)?;
    let code = if inv.pass { EXIT_OK } else { EXIT_FAIL };
    let report = InvarianceCmdReport {
        schema_version: SCHEMA_VERSION,
        command: "invariance".into(),
        model: model.name.clone(),
        params: model.params.clone(),
        point: vec_of(&p),
        invariance: inv,
    };
    let stdout = emit(cfg.output, &report, || {
        format!(
            "model      {} at {}\n{}",
            report.model,
            fmt_vec(&report.point),
            invariance_text(&report.invariance)
        )
    });
    Ok((code, stdout))
}

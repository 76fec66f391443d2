//! Serializable reports. Non-finite numbers are stored as `null`.

use manicorn::cones::PolyhedralCone;
use manicorn::firstorder::{Activity, CQReport, ClassicalKKT, KKTCertificate};
use manicorn::secondorder::{HessianForm, InvarianceReport, Verdict};
use manicorn::solver::IterRecord;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

pub fn fin(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub summary: String,
    pub params: Map<String, Value>,
    pub schema: Map<String, Value>,
    pub has_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListReport {
    pub schema_version: u32,
    pub command: String,
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankJson {
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub rank_w_gprime: usize,
    pub rank_b_gprime: usize,
    pub mfcq_margin: Option<f64>,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqJson {
    pub transversal: bool,
    pub mfcq: bool,
    pub zkrcq: bool,
    pub licq: bool,
    pub mfcq_witness: Option<Vec<f64>>,
    pub rank_data: RankJson,
}

impl From<&CQReport> for CqJson {
    fn from(r: &CQReport) -> Self {
        Self {
            transversal: r.transversal,
            mfcq: r.mfcq,
            zkrcq: r.zkrcq,
            licq: r.licq,
            mfcq_witness: r.mfcq_witness.as_ref().map(vec_of),
            rank_data: RankJson {
                n: r.rank_data.n,
                k: r.rank_data.k,
                ell: r.rank_data.ell,
                rank_w_gprime: r.rank_data.rank_w_gprime,
                rank_b_gprime: r.rank_data.rank_b_gprime,
                mfcq_margin: fin(r.rank_data.mfcq_margin),
                singular_values: r.rank_data.singular_values_b_gprime.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktJson {
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub mu_chart: Vec<f64>,
    pub lambda_i: Vec<f64>,
    pub lambda_e: Vec<f64>,
    pub stationarity_residual: f64,
    pub activity: Vec<String>,
}

impl From<&KKTCertificate> for KktJson {
    fn from(c: &KKTCertificate) -> Self {
        Self {
            n: c.n,
            k: c.k,
            ell: c.ell,
            mu_chart: vec_of(&c.mu_chart),
            lambda_i: vec_of(&c.lambda_i),
            lambda_e: vec_of(&c.lambda_e),
            stationarity_residual: c.stationarity_residual,
            activity: c
                .activity
                .iter()
                .map(|a| match a {
                    Activity::Strong => "strong".to_string(),
                    Activity::Weak => "weak".to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalJson {
    pub eta_i: Vec<f64>,
    pub eta_e: Vec<f64>,
    pub active: Vec<bool>,
    pub complementarity: f64,
}

impl From<&ClassicalKKT> for ClassicalJson {
    fn from(c: &ClassicalKKT) -> Self {
        Self {
            eta_i: vec_of(&c.eta_i),
            eta_e: vec_of(&c.eta_e),
            active: c.active.clone(),
            complementarity: c.complementarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoMultiplierJson {
    pub residual: f64,
    pub tol: f64,
}

/// Output of `check`; also the first half of `certify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema_version: u32,
    pub command: String,
    pub model: String,
    pub params: Map<String, Value>,
    pub point: Vec<f64>,
    pub tol: f64,
    pub constraint_qualifications: CqJson,
    pub kkt: Option<KktJson>,
    pub no_multiplier: Option<NoMultiplierJson>,
    pub classical: Option<ClassicalJson>,
    pub kkt_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeJson {
    pub dim: usize,
    pub inequalities: Vec<Vec<f64>>,
    pub equalities: Vec<Vec<f64>>,
}

impl From<&PolyhedralCone> for ConeJson {
    fn from(c: &PolyhedralCone) -> Self {
        Self {
            dim: c.dim,
            inequalities: rows_of(&c.a_i),
            equalities: rows_of(&c.a_e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictJson {
    pub holds: bool,
    pub outcome: String,
    pub min_value: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub reason: Option<String>,
}

impl From<&Verdict> for VerdictJson {
    fn from(v: &Verdict) -> Self {
        match v {
            Verdict::Holds { min_value } => Self {
                holds: true,
                outcome: "holds".into(),
                min_value: fin(*min_value),
                witness: None,
                reason: None,
            },
            Verdict::Fails { witness, value } => Self {
                holds: false,
                outcome: "fails".into(),
                min_value: fin(*value),
                witness: Some(vec_of(witness)),
                reason: None,
            },
            Verdict::Inconclusive { reason } => Self {
                holds: false,
                outcome: "inconclusive".into(),
                min_value: None,
                witness: None,
                reason: Some(reason.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianJson {
    pub representation: String,
    pub matrix: Vec<Vec<f64>>,
    pub richardson_gap: f64,
    pub ill_conditioned: bool,
}

impl From<&HessianForm> for HessianJson {
    fn from(h: &HessianForm) -> Self {
        Self {
            representation: h.chart_id.clone(),
            matrix: rows_of(&h.matrix),
            richardson_gap: h.gap,
            ill_conditioned: h.ill_conditioned,
        }
    }
}

/// Comparison of one pull-back against the reference pull-back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJson {
    pub retraction: String,
    pub linearizing_map: String,
    /// Whether the linearizing map is adapted; only adapted pairs must agree.
    pub adapted: bool,
    pub samples: usize,
    pub max_on_cone: f64,
    pub max_off_cone: f64,
    pub pass: bool,
}

impl PairJson {
    pub fn new(retraction: &str, linmap: &str, adapted: bool, r: &InvarianceReport) -> Self {
        Self {
            retraction: retraction.into(),
            linearizing_map: linmap.into(),
            adapted,
            samples: r.samples,
            max_on_cone: r.max_on_cone,
            max_off_cone: r.max_off_cone,
            pass: r.pass,
        }
    }
}

/// KKT residual in a non-default representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResidualJson {
    pub chart: String,
    pub retraction: String,
    pub adapted_chart: String,
    pub stationarity_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceJson {
    pub tol: f64,
    pub pairs: Vec<PairJson>,
    pub representations: Vec<RepResidualJson>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    #[serde(flatten)]
    pub check: CheckReport,
    pub critical_cone_m: Option<ConeJson>,
    pub critical_cone_n: Option<ConeJson>,
    pub hessian: Option<HessianJson>,
    pub sosc: Option<VerdictJson>,
    pub sonc: Option<VerdictJson>,
    pub invariance: Option<InvarianceJson>,
    pub second_order_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCmdReport {
    pub schema_version: u32,
    pub command: String,
    pub model: String,
    pub params: Map<String, Value>,
    pub point: Vec<f64>,
    pub invariance: InvarianceJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterJson {
    pub iter: usize,
    pub f: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub feasibility: Option<f64>,
    pub step_norm: Option<f64>,
    pub step_length: Option<f64>,
    pub merit_before: Option<f64>,
    pub merit_after: Option<f64>,
    pub penalty: Option<f64>,
    pub active_rows: usize,
    pub second_order_correction: bool,
}

impl From<&IterRecord> for IterJson {
    fn from(r: &IterRecord) -> Self {
        Self {
            iter: r.iter,
            f: fin(r.f),
            kkt_residual: fin(r.kkt_residual),
            feasibility: fin(r.feasibility),
            step_norm: fin(r.step_norm),
            step_length: fin(r.step_length),
            merit_before: fin(r.merit_before),
            merit_after: fin(r.merit_after),
            penalty: fin(r.penalty),
            active_rows: r.active_rows,
            second_order_correction: r.second_order_correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub command: String,
    pub model: String,
    pub params: Map<String, Value>,
    pub start: Vec<f64>,
    pub hessian_mode: String,
    pub status: String,
    pub message: String,
    pub point: Vec<f64>,
    pub objective: Option<f64>,
    pub iterations: Vec<IterJson>,
    pub certificate: Option<KktJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub command: String,
    pub exit_code: i32,
    pub error: String,
}

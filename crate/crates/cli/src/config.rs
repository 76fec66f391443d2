//! Flat `key = JSON` configuration files and the resolved run configuration.

use std::collections::BTreeMap;

use manicorn::models::{self, Params};
use manicorn::solver::{HessianMode, SolveOptions};
use serde_json::Value;

use crate::CliError;

/// Raw `dotted.key → value` pairs of a config file.
pub type ConfigMap = BTreeMap<String, Value>;

/// Parse lines of the form `dotted.key = <JSON>`; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<ConfigMap, CliError> {
    let mut out = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Config(format!(
                "line {}: invalid key `{key}`",
                i + 1
            )));
        }
        let value: Value = serde_json::from_str(value.trim()).map_err(|e| {
            CliError::Config(format!("line {}: value of `{key}` is not JSON: {e}", i + 1))
        })?;
        if out.insert(key.to_string(), value).is_some() {
            return Err(CliError::Config(format!(
                "line {}: duplicate key `{key}`",
                i + 1
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            other => Err(CliError::Config(format!(
                "unknown output format `{other}` (text|json)"
            ))),
        }
    }
}

/// Command-line overrides; `None` leaves the config value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub point: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub tol: Option<f64>,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub params: Params,
    pub point: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub seed: u64,
    pub output: OutputFormat,
    pub solver: SolveOptions,
    pub samples: usize,
}

fn as_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    v.as_f64()
        .ok_or_else(|| CliError::Config(format!("`{key}` must be a number")))
}

fn as_u64(key: &str, v: &Value) -> Result<u64, CliError> {
    v.as_u64()
        .ok_or_else(|| CliError::Config(format!("`{key}` must be a nonnegative integer")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, CliError> {
    v.as_str()
        .ok_or_else(|| CliError::Config(format!("`{key}` must be a string")))
}

/// Parse a comma-separated list of numbers.
pub fn parse_point(csv: &str) -> Result<Vec<f64>, CliError> {
    csv.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .map_err(|_| CliError::Config(format!("`{s}` in --point is not a number")))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(map: &ConfigMap, ov: &Overrides) -> Result<Self, CliError> {
        let mut model = None;
        let mut params = Params::new();
        let mut point = None;
        let mut tol = None;
        let mut seed = 0;
        let mut output = OutputFormat::Text;
        let mut solver = SolveOptions::default();
        let mut samples = 200;
        for (key, v) in map {
            match key.as_str() {
                "model.name" => model = Some(as_str(key, v)?.to_string()),
                "point" => {
                    let arr = v
                        .as_array()
                        .ok_or_else(|| CliError::Config("`point` must be an array".into()))?;
                    point = Some(
                        arr.iter()
                            .map(|x| as_f64(key, x))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                "tol" => tol = Some(as_f64(key, v)?),
                "seed" => seed = as_u64(key, v)?,
                "output" => output = OutputFormat::parse(as_str(key, v)?)?,
                "invariance.samples" => samples = as_u64(key, v)? as usize,
                "solver.max_iter" => solver.max_iter = as_u64(key, v)? as usize,
                "solver.tol_kkt" => solver.tol_kkt = as_f64(key, v)?,
                "solver.tol_step" => solver.tol_step = as_f64(key, v)?,
                "solver.merit_penalty" => solver.merit_penalty = as_f64(key, v)?,
                "solver.trust_radius" => solver.trust_radius = as_f64(key, v)?,
                "solver.anchor_eps" => solver.anchor_eps = as_f64(key, v)?,
                "solver.hessian_mode" => {
                    let s = as_str(key, v)?;
                    solver.hessian_mode = HessianMode::parse(s)
                        .ok_or_else(|| CliError::Config(format!("unknown hessian mode `{s}`")))?;
                }
                k if k.starts_with("model.") => {
                    params.insert(k["model.".len()..].to_string(), v.clone());
                }
                other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
            }
        }
        if let Some(m) = &ov.model {
            model = Some(m.clone());
        }
        if let Some(p) = &ov.point {
            point = Some(parse_point(p)?);
        }
        if let Some(s) = ov.seed {
            seed = s;
        }
        if let Some(o) = &ov.output {
            output = OutputFormat::parse(o)?;
        }
        if let Some(t) = ov.tol {
            tol = Some(t);
        }
        if let Some(t) = tol {
            if t.is_nan() || t <= 0.0 {
                return Err(CliError::Config("tolerance must be positive".into()));
            }
            solver.tol_kkt = t;
        }
        solver.seed = seed;
        let model = model.ok_or_else(|| {
            CliError::Config("no model given (use --model or `model.name`)".into())
        })?;
        let desc = models::find(&model)
            .ok_or_else(|| CliError::Config(format!("unknown model `{model}`")))?;
        let params = desc
            .params(&params)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            model,
            params,
            point,
            tol,
            seed,
            output,
            solver,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let text = "# remark\nmodel.name = \"remark-counterexample\"\nmodel.alpha = 2.0\npoint = [0, 0]\n\nseed = 3\n";
        let map = parse_config(text).unwrap();
        assert_eq!(map.len(), 4);
        let cfg = RunConfig::resolve(&map, &Overrides::default()).unwrap();
        assert_eq!(cfg.model, "remark-counterexample");
        assert_eq!(cfg.params["alpha"], Value::from(2.0));
        assert_eq!(cfg.point, Some(vec![0.0, 0.0]));
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn overrides_win() {
        let map = parse_config("model.name = \"convex-qp\"\nseed = 1\noutput = \"text\"").unwrap();
        let ov = Overrides {
            seed: Some(9),
            output: Some("json".into()),
            point: Some("1, 2,3".into()),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&map, &ov).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.output, OutputFormat::Json);
        assert_eq!(cfg.point, Some(vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("novalue").is_err());
        assert!(parse_config("a = [1,").is_err());
        assert!(parse_config("a = 1\na = 2").is_err());
        let map = parse_config("model.name = \"convex-qp\"\nbogus = 1").unwrap();
        assert!(RunConfig::resolve(&map, &Overrides::default()).is_err());
        let map = parse_config("model.name = \"convex-qp\"\nmodel.nope = 1").unwrap();
        assert!(RunConfig::resolve(&map, &Overrides::default()).is_err());
        assert!(RunConfig::resolve(&ConfigMap::new(), &Overrides::default()).is_err());
        assert!(parse_point("1,x").is_err());
    }
}

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::baselines::KsgConfig;
use crate::error::{MinfoError, Result};
use crate::estimator::EstimatorConfig;
use crate::sampling::{DataSpec, GaussianSpec, NonlinearSpec, Transform};
use crate::theory::ComplexityInputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Estimate,
    Sweep,
    Equitability,
    Ksg,
    Gradcheck,
    Complexity,
}

impl std::str::FromStr for Experiment {
    type Err = MinfoError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_owned()))
            .map_err(|_| MinfoError::config("experiment", format!("unknown experiment {s:?}")))
    }
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Estimate => "estimate",
            Experiment::Sweep => "sweep",
            Experiment::Equitability => "equitability",
            Experiment::Ksg => "ksg",
            Experiment::Gradcheck => "gradcheck",
            Experiment::Complexity => "complexity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Where results go; `-` means standard output.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum OutputTarget {
    #[default]
    Stdout,
    File(PathBuf),
}

impl From<&str> for OutputTarget {
    fn from(s: &str) -> Self {
        if s == "-" {
            OutputTarget::Stdout
        } else {
            OutputTarget::File(PathBuf::from(s))
        }
    }
}

/// Fully validated harness configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Data for `estimate`; for `sweep` and `ksg` the Gaussian component
    /// count comes from here, for `equitability` the dimension.
    pub data: DataSpec,
    pub estimator: EstimatorConfig,
    pub ksg: KsgConfig,
    /// Sample count for KSG runs.
    pub samples: usize,
    pub rho_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub complexity: ComplexityInputs,
    pub gradcheck_trials: usize,
    pub out: OutputTarget,
    pub format: OutputFormat,
    pub base_seed: u64,
    pub jobs: usize,
    /// Fill the `wall_ms` column. Off by default so that outputs are
    /// byte-reproducible.
    pub timing: bool,
}

pub fn default_rho_grid() -> Vec<f64> {
    (0..10).map(|i| -0.9 + 0.2 * i as f64).map(round6).collect()
}

pub fn default_sigma_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Keys accepted inside the nested `estimator` object as well as at top
/// level.
const ESTIMATOR_KEYS: &[&str] = &[
    "objective",
    "hidden",
    "activation",
    "batch_size",
    "steps",
    "marginal",
    "marginal_mode",
    "ema_rate",
    "no_ema",
    "use_ema_correction",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "eval_size",
    "eval_every",
    "smoothing_window",
    "clip_cap",
];

const TOP_LEVEL_KEYS: &[&str] = &[
    "experiment",
    "rho",
    "k",
    "f",
    "sigma",
    "dim",
    "samples",
    "k_nn",
    "rho_grid",
    "sigma_grid",
    "seed",
    "jobs",
    "out",
    "format",
    "timing",
    "trials",
    "d",
    "m_bound",
    "lipschitz",
    "k_bound",
    "eps",
    "delta",
    "estimator",
];

#[derive(Debug, Default)]
struct Draft {
    experiment: Option<Experiment>,
    rho: Option<f64>,
    k: Option<usize>,
    f: Option<Transform>,
    sigma: Option<f64>,
    dim: Option<usize>,
    samples: Option<usize>,
    k_nn: Option<usize>,
    rho_grid: Option<Vec<f64>>,
    sigma_grid: Option<Vec<f64>>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<String>,
    format: Option<OutputFormat>,
    timing: Option<bool>,
    trials: Option<usize>,
    complexity: ComplexityInputs,
    estimator: EstimatorConfig,
}

fn typed<T: for<'de> Deserialize<'de>>(key: &str, value: &Value) -> Result<T> {
    serde_json::from_value(value.clone())
        .map_err(|e| MinfoError::config(key, format!("bad value {value}: {e}")))
}

fn transform_from(key: &str, value: &Value) -> Result<Transform> {
    match value.as_str() {
        Some("x") | Some("identity") => Ok(Transform::Identity),
        Some("x3") | Some("cube") => Ok(Transform::Cube),
        Some("sin") | Some("sine") => Ok(Transform::Sine),
        _ => Err(MinfoError::config(key, format!("expected x, x3 or sin, got {value}"))),
    }
}

impl Draft {
    fn set_estimator(&mut self, key: &str, value: &Value) -> Result<()> {
        let est = &mut self.estimator;
        match key {
            "objective" => est.objective = typed(key, value)?,
            "hidden" => est.hidden = typed(key, value)?,
            "activation" => est.activation = typed(key, value)?,
            "batch_size" => est.batch_size = typed(key, value)?,
            "steps" => est.steps = typed(key, value)?,
            "marginal" | "marginal_mode" => est.marginal_mode = typed(key, value)?,
            "ema_rate" => est.ema_rate = typed(key, value)?,
            "no_ema" => est.use_ema_correction = !typed::<bool>(key, value)?,
            "use_ema_correction" => est.use_ema_correction = typed(key, value)?,
            "lr" => est.adam.lr = typed(key, value)?,
            "beta1" => est.adam.beta1 = typed(key, value)?,
            "beta2" => est.adam.beta2 = typed(key, value)?,
            "adam_eps" => est.adam.eps = typed(key, value)?,
            "eval_size" => est.eval_size = typed(key, value)?,
            "eval_every" => est.eval_every = typed(key, value)?,
            "smoothing_window" => est.smoothing_window = typed(key, value)?,
            "clip_cap" => est.clip_cap = typed(key, value)?,
            _ => return Err(MinfoError::config(key, "unknown key")),
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        if ESTIMATOR_KEYS.contains(&key) {
            return self.set_estimator(key, value);
        }
        match key {
            "experiment" => self.experiment = Some(typed(key, value)?),
            "rho" => self.rho = Some(typed(key, value)?),
            "k" => self.k = Some(typed(key, value)?),
            "f" => self.f = Some(transform_from(key, value)?),
            "sigma" => self.sigma = Some(typed(key, value)?),
            "dim" => self.dim = Some(typed(key, value)?),
            "samples" => self.samples = Some(typed(key, value)?),
            "k_nn" => self.k_nn = Some(typed(key, value)?),
            "rho_grid" => self.rho_grid = Some(typed(key, value)?),
            "sigma_grid" => self.sigma_grid = Some(typed(key, value)?),
            "seed" => self.seed = Some(typed(key, value)?),
            "jobs" => self.jobs = Some(typed(key, value)?),
            "out" => self.out = Some(typed(key, value)?),
            "format" => self.format = Some(typed(key, value)?),
            "timing" => self.timing = Some(typed(key, value)?),
            "trials" => self.trials = Some(typed(key, value)?),
            "d" => self.complexity.d = typed(key, value)?,
            "m_bound" => self.complexity.m = typed(key, value)?,
            "lipschitz" => self.complexity.l = typed(key, value)?,
            "k_bound" => self.complexity.k = typed(key, value)?,
            "eps" => self.complexity.eps = typed(key, value)?,
            "delta" => self.complexity.delta = typed(key, value)?,
            "estimator" => {
                let nested = value
                    .as_object()
                    .ok_or_else(|| MinfoError::config(key, "must be an object"))?;
                for (k, v) in nested {
                    if !ESTIMATOR_KEYS.contains(&k.as_str()) {
                        return Err(MinfoError::config(format!("estimator.{k}"), "unknown key"));
                    }
                    self.set_estimator(k, v)
                        .map_err(|e| rename_key(e, &format!("estimator.{k}")))?;
                }
            }
            _ => return Err(MinfoError::config(key, "unknown key")),
        }
        Ok(())
    }

    fn apply_object(&mut self, map: &Map<String, Value>) -> Result<()> {
        for (k, v) in map {
            if !TOP_LEVEL_KEYS.contains(&k.as_str()) && !ESTIMATOR_KEYS.contains(&k.as_str()) {
                return Err(MinfoError::config(k.clone(), "unknown key"));
            }
            self.set(k, v)?;
        }
        Ok(())
    }
}

fn rename_key(e: MinfoError, key: &str) -> MinfoError {
    match e {
        MinfoError::Config { reason, .. } => MinfoError::config(key, reason),
        other => other,
    }
}

fn check_rho(key: &str, rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(MinfoError::config(key, format!("|rho| must be < 1, got {rho}")));
    }
    Ok(())
}

/// Builds a [`RunConfig`] from an optional JSON document and flag overrides
/// (applied after the file, so they win). Every key, in the file or among
/// the overrides, must be known.
pub fn parse_config(file: Option<&[u8]>, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let mut draft = Draft::default();
    if let Some(bytes) = file {
        let doc: Value = serde_json::from_slice(bytes)
            .map_err(|e| MinfoError::config("config", format!("not valid JSON: {e}")))?;
        let map = doc
            .as_object()
            .ok_or_else(|| MinfoError::config("config", "top level must be a JSON object"))?;
        draft.apply_object(map)?;
    }
    for (k, v) in overrides {
        if !TOP_LEVEL_KEYS.contains(&k.as_str()) && !ESTIMATOR_KEYS.contains(&k.as_str()) {
            return Err(MinfoError::config(k.clone(), "unknown key"));
        }
        draft.set(k, v)?;
    }
    finish(draft)
}

fn finish(d: Draft) -> Result<RunConfig> {
    let experiment = d
        .experiment
        .ok_or_else(|| MinfoError::config("experiment", "no experiment given"))?;
    let rho = d.rho.unwrap_or(0.5);
    check_rho("rho", rho)?;
    let k = d.k.unwrap_or(1);
    if k == 0 {
        return Err(MinfoError::config("k", "must be at least 1"));
    }
    let dim = d.dim.unwrap_or(2);
    if dim == 0 {
        return Err(MinfoError::config("dim", "must be at least 1"));
    }
    let sigma = d.sigma.unwrap_or(0.5);
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(MinfoError::config("sigma", "must be finite and non-negative"));
    }
    let data = match (d.f, d.sigma) {
        (None, None) => DataSpec::Gaussian(GaussianSpec { k, rho }),
        (f, _) => DataSpec::Nonlinear(NonlinearSpec {
            f: f.unwrap_or(Transform::Identity),
            sigma,
            dim,
        }),
    };
    let rho_grid = d.rho_grid.unwrap_or_else(default_rho_grid);
    if rho_grid.is_empty() {
        return Err(MinfoError::config("rho_grid", "must not be empty"));
    }
    for &r in &rho_grid {
        check_rho("rho_grid", r)?;
    }
    let sigma_grid = d.sigma_grid.unwrap_or_else(default_sigma_grid);
    if sigma_grid.is_empty() || sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(MinfoError::config("sigma_grid", "needs finite non-negative entries"));
    }
    let samples = d.samples.unwrap_or(5000);
    let k_nn = d.k_nn.unwrap_or(3);
    if k_nn == 0 {
        return Err(MinfoError::config("k_nn", "must be at least 1"));
    }
    if samples <= k_nn {
        return Err(MinfoError::config("samples", "must exceed k_nn"));
    }
    let jobs = match d.jobs {
        Some(0) => return Err(MinfoError::config("jobs", "must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let trials = d.trials.unwrap_or(20);
    if trials == 0 {
        return Err(MinfoError::config("trials", "must be at least 1"));
    }
    let base_seed = d.seed.unwrap_or(0);
    let mut estimator = d.estimator;
    estimator.seed = base_seed;
    estimator.validate()?;
    Ok(RunConfig {
        experiment,
        data,
        estimator,
        ksg: KsgConfig { k: k_nn, seed: base_seed },
        samples,
        rho_grid,
        sigma_grid,
        complexity: d.complexity,
        gradcheck_trials: trials,
        out: d.out.as_deref().map(OutputTarget::from).unwrap_or_default(),
        format: d.format.unwrap_or_default(),
        base_seed,
        jobs,
        timing: d.timing.unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn key_of(e: MinfoError) -> String {
        match e {
            MinfoError::Config { key, .. } => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(Some(br#"{"experiment":"estimate","rho":0.5,"k":2}"#), &[]).unwrap();
        assert_eq!(cfg.experiment, Experiment::Estimate);
        assert_eq!(cfg.data, DataSpec::Gaussian(GaussianSpec { k: 2, rho: 0.5 }));
        assert_eq!(cfg.estimator, EstimatorConfig::default());
        assert_eq!(cfg.rho_grid.len(), 10);
        assert_eq!(cfg.rho_grid[0], -0.9);
        assert_eq!(cfg.rho_grid[9], 0.9);
        assert_eq!(cfg.sigma_grid, default_sigma_grid());
        assert_eq!(cfg.out, OutputTarget::Stdout);
        assert_eq!(cfg.format, OutputFormat::Csv);
        assert!(!cfg.timing);
    }

    #[test]
    fn rho_out_of_range_is_named() {
        let e = parse_config(Some(br#"{"experiment":"estimate","rho":1.5}"#), &[]).unwrap_err();
        assert_eq!(key_of(e), "rho");
        let e = parse_config(Some(br#"{"rho":1.5}"#), &[("experiment".into(), json!("estimate"))])
            .unwrap_err();
        assert_eq!(key_of(e), "rho");
    }

    #[test]
    fn flags_override_file() {
        let cfg = parse_config(
            Some(br#"{"experiment":"ksg","seed":3}"#),
            &[("seed".into(), json!(7))],
        )
        .unwrap();
        assert_eq!(cfg.base_seed, 7);
        assert_eq!(cfg.ksg.seed, 7);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let e = parse_config(Some(br#"{"experiment":"sweep","bogus":1}"#), &[]).unwrap_err();
        assert_eq!(key_of(e), "bogus");
        let e = parse_config(Some(br#"{"experiment":"sweep","steps":"many"}"#), &[]).unwrap_err();
        assert_eq!(key_of(e), "steps");
        let e = parse_config(Some(br#"{"experiment":"sweep","estimator":{"lr":"x"}}"#), &[]).unwrap_err();
        assert_eq!(key_of(e), "estimator.lr");
        let e = parse_config(Some(br#"{"experiment":"sweep","estimator":{"rho":0.1}}"#), &[]).unwrap_err();
        assert_eq!(key_of(e), "estimator.rho");
        let e = parse_config(Some(b"[1,2]"), &[]).unwrap_err();
        assert_eq!(key_of(e), "config");
        let e = parse_config(Some(b"{not json"), &[]).unwrap_err();
        assert_eq!(key_of(e), "config");
    }

    #[test]
    fn nested_estimator_settings() {
        let cfg = parse_config(
            Some(br#"{"experiment":"estimate","estimator":{"batch_size":64,"hidden":[10],"objective":"f","marginal":"resample"}}"#),
            &[("no_ema".into(), json!(true))],
        )
        .unwrap();
        assert_eq!(cfg.estimator.batch_size, 64);
        assert_eq!(cfg.estimator.hidden, vec![10]);
        assert_eq!(cfg.estimator.eval_size(), 640);
        assert!(!cfg.estimator.use_ema_correction);
    }

    #[test]
    fn nonlinear_data_selected_by_f_or_sigma() {
        let cfg = parse_config(Some(br#"{"experiment":"estimate","f":"x3","sigma":0.2}"#), &[]).unwrap();
        assert_eq!(
            cfg.data,
            DataSpec::Nonlinear(NonlinearSpec { f: Transform::Cube, sigma: 0.2, dim: 2 })
        );
    }

    #[test]
    fn invariant_violations() {
        for (doc, key) in [
            (r#"{"experiment":"sweep","rho_grid":[0.1,1.0]}"#, "rho_grid"),
            (r#"{"experiment":"sweep","jobs":0}"#, "jobs"),
            (r#"{"experiment":"ksg","samples":3,"k_nn":3}"#, "samples"),
            (r#"{"experiment":"estimate","batch_size":1}"#, "batch_size"),
            (r#"{"experiment":"estimate","ema_rate":2.0}"#, "ema_rate"),
            (r#"{"rho":0.1}"#, "experiment"),
            (r#"{"experiment":"nope"}"#, "experiment"),
        ] {
            let e = parse_config(Some(doc.as_bytes()), &[]).unwrap_err();
            assert_eq!(key_of(e), key, "{doc}");
        }
    }
}

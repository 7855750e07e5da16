use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Experiment, OutputFormat, RunConfig};
use super::emit::{render, ResultRow};
use crate::baselines::{gaussian_mi_analytic, ksg_estimate, KsgConfig};
use crate::error::{MinfoError, Result};
use crate::estimator::{train_mine, EstimatorConfig, Method, Objective};
use crate::sampling::{derive_seed, DataSpec, GaussianSpec, JointSampler, NonlinearSpec, Rng, Transform};
use crate::tensor_nn::{grad_check, mlp_init, Activation, Matrix};
use crate::theory::sample_complexity;

/// Rendered output plus whether any sub-run failed numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub bytes: Vec<u8>,
    pub any_failed: bool,
}

/// Runs the configured experiment and renders its output.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let rows = match cfg.experiment {
        Experiment::Estimate => run_estimate(cfg)?,
        Experiment::Sweep => run_sweep(cfg)?,
        Experiment::Equitability => run_equitability(cfg)?,
        Experiment::Ksg => run_ksg(cfg)?,
        Experiment::Gradcheck => {
            let rows = run_gradcheck(cfg)?;
            let any_failed = rows.iter().any(|r| !r.pass);
            return Ok(RunOutcome {
                bytes: render_table(&rows, cfg.format)?,
                any_failed,
            });
        }
        Experiment::Complexity => {
            let rows = vec![run_complexity(cfg)?];
            return Ok(RunOutcome {
                bytes: render_table(&rows, cfg.format)?,
                any_failed: false,
            });
        }
    };
    Ok(RunOutcome {
        any_failed: rows.iter().any(ResultRow::failed),
        bytes: render(&rows, cfg.format)?,
    })
}

#[derive(Debug, Clone)]
enum Task {
    Mine {
        method: Method,
        data: DataSpec,
        seed: u64,
    },
    Ksg {
        data: DataSpec,
        seed: u64,
    },
}

fn truth(data: &DataSpec) -> Option<f64> {
    match data {
        DataSpec::Gaussian(g) => gaussian_mi_analytic(g).ok(),
        DataSpec::Nonlinear(_) => None,
    }
}

fn run_task(cfg: &RunConfig, experiment: &str, task: &Task) -> ResultRow {
    let start = Instant::now();
    let (method, data, seed, result) = match task {
        Task::Mine { method, data, seed } => {
            let objective = match method {
                Method::MineF => Objective::FDivergence,
                _ => Objective::DonskerVaradhan,
            };
            let est_cfg = EstimatorConfig {
                objective,
                seed: *seed,
                ..cfg.estimator.clone()
            };
            (*method, *data, *seed, train_mine(&est_cfg, data).map(|e| e.nats))
        }
        Task::Ksg { data, seed } => {
            let mut rng = Rng::from_seed(*seed);
            let result = data.sample(cfg.samples, &mut rng).and_then(|batch| {
                ksg_estimate(&batch, &KsgConfig { k: cfg.ksg.k, seed: *seed }).map(|e| e.nats)
            });
            (Method::Ksg, *data, *seed, result)
        }
    };
    let wall_ms = cfg.timing.then(|| start.elapsed().as_millis() as u64);
    let (k, rho, f, sigma) = match data {
        DataSpec::Gaussian(g) => (Some(g.k), Some(g.rho), None, None),
        DataSpec::Nonlinear(n) => (None, None, Some(n.f.name().to_owned()), Some(n.sigma)),
    };
    let truth_nats = truth(&data);
    let estimate_nats = match result {
        Ok(v) => Some(v),
        Err(e) => {
            eprintln!("[minfo] {experiment} {} failed: {e}", method.tag());
            None
        }
    };
    let abs_err = estimate_nats.zip(truth_nats).map(|(e, t)| (e - t).abs());
    ResultRow {
        experiment: experiment.to_owned(),
        method: method.tag().to_owned(),
        k,
        rho,
        f,
        sigma,
        estimate_nats,
        truth_nats,
        abs_err,
        seed,
        wall_ms,
    }
}

/// Executes tasks on up to `cfg.jobs` threads. Output order follows task
/// order, never completion order.
fn run_tasks(cfg: &RunConfig, experiment: &str, tasks: &[Task]) -> Result<Vec<ResultRow>> {
    let total = tasks.len();
    let work = |(i, t): (usize, &Task)| {
        let row = run_task(cfg, experiment, t);
        eprintln!(
            "[minfo] {experiment} {}/{total} {} -> {}",
            i + 1,
            row.method,
            row.estimate_nats.map_or("failed".to_owned(), |v| format!("{v:.4}"))
        );
        row
    };
    if cfg.jobs <= 1 {
        return Ok(tasks.iter().enumerate().map(work).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| MinfoError::config("jobs", e.to_string()))?;
    Ok(pool.install(|| tasks.par_iter().enumerate().map(work).collect()))
}

fn method_for(objective: Objective) -> Method {
    Method::for_objective(objective)
}

/// One MINE run on the configured data.
pub fn run_estimate(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let method = method_for(cfg.estimator.objective);
    let task = Task::Mine {
        method,
        data: cfg.data,
        seed: derive_seed(cfg.base_seed, method.tag(), 0),
    };
    run_tasks(cfg, "estimate", &[task])
}

/// One KSG run on `cfg.samples` points of the configured data.
pub fn run_ksg(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let task = Task::Ksg {
        data: cfg.data,
        seed: derive_seed(cfg.base_seed, Method::Ksg.tag(), 0),
    };
    run_tasks(cfg, "ksg", &[task])
}

/// MINE-DV, MINE-f and KSG over the rho grid, ordered by method then rho.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let k = match cfg.data {
        DataSpec::Gaussian(g) => g.k,
        DataSpec::Nonlinear(_) => {
            return Err(MinfoError::config("f", "sweep runs on Gaussian data only"));
        }
    };
    let mut tasks = Vec::new();
    for method in [Method::MineDv, Method::MineF, Method::Ksg] {
        for (i, &rho) in cfg.rho_grid.iter().enumerate() {
            let data = DataSpec::Gaussian(GaussianSpec { k, rho });
            let seed = derive_seed(cfg.base_seed, method.tag(), i as u64);
            tasks.push(match method {
                Method::Ksg => Task::Ksg { data, seed },
                m => Task::Mine { method: m, data, seed },
            });
        }
    }
    run_tasks(cfg, "sweep", &tasks)
}

/// MINE-DV on `z = f(x) + σ·ε` for every `f` and `σ` in the grid, followed
/// by one `spread` row per σ holding `max - min` across `f`.
///
/// All three transforms at a given σ share a seed, so they see the same
/// `x` and `ε` draws.
pub fn run_equitability(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let dim = match cfg.data {
        DataSpec::Nonlinear(n) => n.dim,
        DataSpec::Gaussian(_) => 2,
    };
    let mut tasks = Vec::new();
    for f in Transform::ALL {
        for (i, &sigma) in cfg.sigma_grid.iter().enumerate() {
            tasks.push(Task::Mine {
                method: Method::MineDv,
                data: DataSpec::Nonlinear(NonlinearSpec { f, sigma, dim }),
                seed: derive_seed(cfg.base_seed, Method::MineDv.tag(), i as u64),
            });
        }
    }
    let mut rows = run_tasks(cfg, "equitability", &tasks)?;
    let n_sigma = cfg.sigma_grid.len();
    for (i, &sigma) in cfg.sigma_grid.iter().enumerate() {
        let cells: Option<Vec<f64>> = (0..Transform::ALL.len())
            .map(|fi| rows[fi * n_sigma + i].estimate_nats)
            .collect();
        let spread = cells.map(|c| {
            let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            max - min
        });
        rows.push(ResultRow {
            experiment: "equitability".into(),
            method: "spread".into(),
            k: None,
            rho: None,
            f: None,
            sigma: Some(sigma),
            estimate_nats: spread,
            truth_nats: None,
            abs_err: None,
            seed: derive_seed(cfg.base_seed, Method::MineDv.tag(), i as u64),
            wall_ms: None,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub trial: usize,
    pub seed: u64,
    pub input_dim: usize,
    pub hidden: String,
    pub activation: String,
    pub rows: usize,
    pub params: usize,
    pub max_rel_err: f64,
    pub skipped: usize,
    pub pass: bool,
}

/// Tolerance used by the `gradcheck` experiment.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Gradient checks on `cfg.gradcheck_trials` random networks and batches.
pub fn run_gradcheck(cfg: &RunConfig) -> Result<Vec<GradcheckRow>> {
    (0..cfg.gradcheck_trials)
        .map(|trial| {
            let seed = derive_seed(cfg.base_seed, "gradcheck", trial as u64);
            let mut rng = Rng::from_seed(seed);
            let input_dim = 1 + (rng.next_u64() % 6) as usize;
            let depth = 1 + (rng.next_u64() % 3) as usize;
            let hidden: Vec<usize> = (0..depth).map(|_| 2 + (rng.next_u64() % 15) as usize).collect();
            let activation = if rng.next_u64() % 2 == 0 {
                Activation::Relu
            } else {
                Activation::Elu
            };
            let rows = 4 + (rng.next_u64() % 29) as usize;
            let mut params = mlp_init(input_dim, &hidden, activation, seed)?;
            // random biases keep ReLU pre-activations off the exact kink
            let flat: Vec<f64> = params.to_flat().iter().map(|w| w + 0.1 * rng.normal()).collect();
            params.set_flat(&flat)?;
            let data = (0..rows * input_dim).map(|_| rng.normal()).collect();
            let inputs = Matrix::from_vec(rows, input_dim, data)?;
            let report = grad_check(&params, &inputs, GRADCHECK_TOL)?;
            Ok(GradcheckRow {
                trial,
                seed,
                input_dim,
                hidden: hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("x"),
                activation: format!("{activation:?}").to_lowercase(),
                rows,
                params: params.param_count(),
                max_rel_err: report.max_rel_err,
                skipped: report.skipped,
                pass: report.pass,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub d: f64,
    pub m_bound: f64,
    pub lipschitz: f64,
    pub k_bound: f64,
    pub eps: f64,
    pub delta: f64,
    pub samples: u64,
}

pub fn run_complexity(cfg: &RunConfig) -> Result<ComplexityRow> {
    let c = cfg.complexity;
    let samples = sample_complexity(&c).map_err(|e| match e {
        MinfoError::Argument { name, reason } => MinfoError::config(name, reason),
        other => other,
    })?;
    Ok(ComplexityRow {
        d: c.d,
        m_bound: c.m,
        lipschitz: c.l,
        k_bound: c.k,
        eps: c.eps,
        delta: c.delta,
        samples,
    })
}

fn render_table<T: Serialize>(rows: &[T], format: OutputFormat) -> Result<Vec<u8>> {
    let io = |e: String| MinfoError::Io(e);
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| io(e.to_string()))?;
            }
            w.into_inner().map_err(|e| io(e.to_string()))
        }
        OutputFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(rows).map_err(|e| io(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn quick(doc: &str) -> RunConfig {
        parse_config(Some(doc.as_bytes()), &[]).unwrap()
    }

    const FAST: &str = r#""estimator":{"hidden":[8],"batch_size":16,"steps":6,"eval_every":3,"smoothing_window":2}"#;

    #[test]
    fn sweep_shape_and_truth() {
        let cfg = quick(&format!(
            r#"{{"experiment":"sweep","samples":60,"jobs":1,{FAST}}}"#
        ));
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 30);
        let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        assert!(methods[..10].iter().all(|m| *m == "mine_dv"));
        assert!(methods[10..20].iter().all(|m| *m == "mine_f"));
        assert!(methods[20..].iter().all(|m| *m == "ksg"));
        for r in &rows {
            let rho = r.rho.unwrap();
            let t = -0.5 * (1.0 - rho * rho).ln();
            assert!((r.truth_nats.unwrap() - t).abs() < 1e-12);
            assert!(r.f.is_none() && r.sigma.is_none());
        }
    }

    #[test]
    fn sweep_parallel_equals_sequential() {
        let seq = quick(&format!(
            r#"{{"experiment":"sweep","samples":40,"jobs":1,"rho_grid":[-0.5,0.0,0.5],{FAST}}}"#
        ));
        let par = RunConfig { jobs: 3, ..seq.clone() };
        assert_eq!(execute(&seq).unwrap(), execute(&par).unwrap());
    }

    #[test]
    fn equitability_grid_shape() {
        let cfg = quick(&format!(r#"{{"experiment":"equitability","jobs":1,{FAST}}}"#));
        let rows = run_equitability(&cfg).unwrap();
        let cells: Vec<_> = rows.iter().filter(|r| r.method == "mine_dv").collect();
        assert_eq!(cells.len(), 30);
        let spreads: Vec<_> = rows.iter().filter(|r| r.method == "spread").collect();
        assert_eq!(spreads.len(), 10);
        for s in spreads {
            assert!(s.estimate_nats.unwrap() >= 0.0);
            assert!(s.truth_nats.is_none());
        }
        assert!(cells.iter().all(|r| r.truth_nats.is_none() && r.k.is_none()));
    }

    #[test]
    fn gradcheck_and_complexity_tables() {
        let cfg = quick(r#"{"experiment":"gradcheck","trials":5}"#);
        let rows = run_gradcheck(&cfg).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
        let cfg = quick(r#"{"experiment":"complexity","d":2,"eps":0.1,"delta":0.1}"#);
        assert_eq!(run_complexity(&cfg).unwrap().samples, 3568);
        let bad = quick(r#"{"experiment":"complexity","eps":50}"#);
        assert!(matches!(run_complexity(&bad), Err(MinfoError::Config { .. })));
    }

    #[test]
    fn failed_runs_are_marked() {
        let cfg = quick(
            r#"{"experiment":"estimate","objective":"f","lr":1000000.0,"hidden":[8],"batch_size":16,"steps":300,"eval_every":10}"#,
        );
        let out = execute(&cfg).unwrap();
        assert!(out.any_failed);
        let text = String::from_utf8(out.bytes).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("estimate,mine_f,1,0.500000,,,,0.143841,,"), "{row}");
    }
}

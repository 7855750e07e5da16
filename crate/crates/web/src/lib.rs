//! Browser bindings for the `minfo` demo page.
//!
//! Three operations: the analytic and KSG curves over ρ, an incrementally
//! trained MINE estimator, and the sample-complexity calculator. Everything
//! runs on the page's thread, so the trainer advances in short bursts.

use minfo::baselines::{gaussian_mi_analytic, ksg_estimate, KsgConfig};
use minfo::estimator::{EstimatorConfig, MineTrainer, Objective};
use minfo::sampling::{derive_seed, DataSpec, GaussianSpec, JointSampler, Rng};
use minfo::theory::{sample_complexity, ComplexityInputs};
use wasm_bindgen::prelude::*;

fn js(err: minfo::MinfoError) -> JsError {
    JsError::new(&err.to_string())
}

/// `(rho, analytic, ksg)` for `points` values of ρ evenly spread over
/// `[-0.95, 0.95]`, each KSG estimate from `n` fresh samples.
pub fn curve(k: usize, n: usize, k_nn: usize, points: usize, seed: u64) -> minfo::Result<Vec<[f64; 3]>> {
    if points < 2 {
        return Err(minfo::MinfoError::Argument {
            name: "points",
            reason: "need at least two".into(),
        });
    }
    (0..points)
        .map(|i| {
            let rho = -0.95 + 1.9 * i as f64 / (points - 1) as f64;
            let spec = GaussianSpec::new(k, rho)?;
            let task_seed = derive_seed(seed, "ksg", i as u64);
            let batch = DataSpec::Gaussian(spec).sample(n, &mut Rng::from_seed(task_seed))?;
            let ksg = ksg_estimate(&batch, &KsgConfig { k: k_nn, seed: task_seed })?.nats;
            Ok([rho, gaussian_mi_analytic(&spec)?, ksg])
        })
        .collect()
}

/// Flattened `[rho, analytic, ksg, rho, analytic, ksg, ...]`.
#[wasm_bindgen(js_name = gaussianCurve)]
pub fn gaussian_curve(k: usize, n: usize, k_nn: usize, points: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    Ok(curve(k, n, k_nn, points, seed as u64).map_err(js)?.concat())
}

/// Required sample count, returned as a float because JS numbers are.
#[wasm_bindgen(js_name = sampleComplexity)]
pub fn sample_complexity_js(d: f64, m: f64, l: f64, k: f64, eps: f64, delta: f64) -> Result<f64, JsError> {
    let n = sample_complexity(&ComplexityInputs { d, m, l, k, eps, delta }).map_err(js)?;
    Ok(n as f64)
}

/// MINE on a correlated Gaussian, advanced a few steps per call.
#[wasm_bindgen]
pub struct Trainer {
    inner: MineTrainer<DataSpec>,
    truth: f64,
}

impl Trainer {
    pub fn create(
        k: usize,
        rho: f64,
        objective: Objective,
        hidden: usize,
        batch_size: usize,
        steps: usize,
        seed: u64,
    ) -> minfo::Result<Self> {
        let spec = GaussianSpec::new(k, rho)?;
        let config = EstimatorConfig {
            objective,
            hidden: vec![hidden, hidden],
            batch_size,
            steps,
            eval_every: 25,
            seed,
            ..EstimatorConfig::default()
        };
        Ok(Trainer {
            inner: MineTrainer::new(config, DataSpec::Gaussian(spec))?,
            truth: gaussian_mi_analytic(&spec)?,
        })
    }

    /// Runs up to `steps` updates, stopping at the budget.
    pub fn advance(&mut self, steps: usize) -> minfo::Result<usize> {
        let mut done = 0;
        while done < steps && !self.inner.is_finished() {
            self.inner.step()?;
            done += 1;
        }
        Ok(done)
    }
}

#[wasm_bindgen]
impl Trainer {
    /// `objective` is `"dv"` or `"f"`.
    #[wasm_bindgen(constructor)]
    pub fn new(
        k: usize,
        rho: f64,
        objective: &str,
        hidden: usize,
        batch_size: usize,
        steps: usize,
        seed: u32,
    ) -> Result<Trainer, JsError> {
        let objective = objective.parse().map_err(js)?;
        Trainer::create(k, rho, objective, hidden, batch_size, steps, seed as u64).map_err(js)
    }

    pub fn run(&mut self, steps: usize) -> Result<usize, JsError> {
        self.advance(steps).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[wasm_bindgen(getter, js_name = stepsDone)]
    pub fn steps_done(&self) -> usize {
        self.inner.steps_done()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> f64 {
        self.truth
    }

    /// Smoothed estimate, NaN before the first evaluation.
    #[wasm_bindgen(getter)]
    pub fn estimate(&self) -> f64 {
        self.inner.current_estimate().unwrap_or(f64::NAN)
    }

    /// Flattened `[step, value, step, value, ...]` of every evaluation.
    pub fn evaluations(&self) -> Vec<f64> {
        self.inner
            .trace()
            .evaluations()
            .flat_map(|(s, v)| [s as f64, v])
            .collect()
    }
}

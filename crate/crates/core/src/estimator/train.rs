use serde::{Deserialize, Serialize};

use super::objective::{
    dv_value, ema_update, f_value, log_mean_exp, EmaState, Objective, ScoredBatch,
};
use crate::error::{MinfoError, Result};
use crate::sampling::{
    derive_seed, marginal_resample, marginal_shuffle, JointSampler, MarginalBatch, MarginalMode,
    Rng, SampleBatch,
};
use crate::tensor_nn::{adam_step, adaptive_clip, mlp_init, Activation, AdamConfig, AdamState, MlpParams};

/// Settings for one MINE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub objective: Objective,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub steps: usize,
    pub marginal_mode: MarginalMode,
    pub ema_rate: f64,
    pub use_ema_correction: bool,
    #[serde(flatten)]
    pub adam: AdamConfig,
    /// Points per evaluation set; `None` means ten batches.
    pub eval_size: Option<usize>,
    pub eval_every: usize,
    pub smoothing_window: usize,
    pub clip_cap: Option<f64>,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            objective: Objective::DonskerVaradhan,
            hidden: vec![100, 100],
            activation: Activation::Relu,
            batch_size: 256,
            steps: 3000,
            marginal_mode: MarginalMode::Shuffle,
            ema_rate: 0.01,
            use_ema_correction: true,
            adam: AdamConfig::default(),
            eval_size: None,
            eval_every: 50,
            smoothing_window: 10,
            clip_cap: None,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn eval_size(&self) -> usize {
        self.eval_size.unwrap_or(10 * self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(MinfoError::config("batch_size", "must be at least 2"));
        }
        if self.steps == 0 {
            return Err(MinfoError::config("steps", "must be at least 1"));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate <= 1.0) {
            return Err(MinfoError::config("ema_rate", "must lie in (0, 1]"));
        }
        if self.eval_size() < self.batch_size {
            return Err(MinfoError::config("eval_size", "must be at least batch_size"));
        }
        if self.eval_every == 0 {
            return Err(MinfoError::config("eval_every", "must be at least 1"));
        }
        if self.smoothing_window == 0 {
            return Err(MinfoError::config("smoothing_window", "must be at least 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(MinfoError::config("hidden", "needs one or more non-zero widths"));
        }
        if let Some(cap) = self.clip_cap {
            if !(cap >= 0.0 && cap.is_finite()) {
                return Err(MinfoError::config("clip_cap", "must be finite and non-negative"));
            }
        }
        self.adam.validate()
    }
}

/// Estimation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MineDv,
    MineF,
    Ksg,
    Analytic,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::MineDv => "mine_dv",
            Method::MineF => "mine_f",
            Method::Ksg => "ksg",
            Method::Analytic => "analytic",
        }
    }

    pub fn for_objective(objective: Objective) -> Self {
        match objective {
            Objective::DonskerVaradhan => Method::MineDv,
            Objective::FDivergence => Method::MineF,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = MinfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mine_dv" => Ok(Method::MineDv),
            "mine_f" => Ok(Method::MineF),
            "ksg" => Ok(Method::Ksg),
            "analytic" => Ok(Method::Analytic),
            other => Err(MinfoError::config("method", format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Minibatch bound value, nats.
    pub objective: f64,
    pub ema: Option<f64>,
    pub grad_norm: f64,
    pub eval: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn evaluations(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.records.iter().filter_map(|r| r.eval.map(|e| (r.step, e)))
    }
}

/// A point estimate of mutual information in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub nats: f64,
    pub method: Method,
    pub eval_points: usize,
    pub trace: Option<TrainingTrace>,
}

/// Value of the chosen bound for `params` on an evaluation batch.
///
/// `Shuffle` permutes the batch's `z` rows. `Resample` pairs the `x` rows of
/// the first half with the `z` rows of the second half, which are
/// independent draws.
pub fn evaluate_bound(
    params: &MlpParams,
    eval_batch: &SampleBatch,
    objective: Objective,
    marginal_mode: MarginalMode,
    rng: &mut Rng,
) -> Result<f64> {
    let n = eval_batch.len();
    if n < 2 {
        return Err(MinfoError::argument("eval_batch", "needs at least 2 rows"));
    }
    let marg = match marginal_mode {
        MarginalMode::Shuffle => marginal_shuffle(eval_batch, rng),
        MarginalMode::Resample => {
            let half = n / 2;
            let first: Vec<usize> = (0..half).collect();
            let second: Vec<usize> = (half..2 * half).collect();
            MarginalBatch {
                x: eval_batch.x.select_rows(&first),
                z_bar: eval_batch.z.select_rows(&second),
            }
        }
    };
    let t_joint = params.forward(&eval_batch.inputs())?;
    let t_marg = params.forward(&marg.inputs())?;
    objective.value(&t_joint, &t_marg)
}

/// A statistics network being trained, stepped one update at a time.
///
/// [`train_mine`] drives this to completion; interactive front ends can
/// call [`MineTrainer::step`] incrementally.
pub struct MineTrainer<S: JointSampler> {
    config: EstimatorConfig,
    sampler: S,
    params: MlpParams,
    adam: AdamState,
    ema: EmaState,
    train_rng: Rng,
    eval_rng: Rng,
    step: usize,
    trace: TrainingTrace,
}

impl<S: JointSampler> MineTrainer<S> {
    pub fn new(config: EstimatorConfig, sampler: S) -> Result<Self> {
        config.validate()?;
        let input_dim = sampler.x_dim() + sampler.z_dim();
        let params = mlp_init(
            input_dim,
            &config.hidden,
            config.activation,
            derive_seed(config.seed, "init", 0),
        )?;
        let adam = AdamState::new(&params, config.adam);
        Ok(MineTrainer {
            train_rng: Rng::from_seed(derive_seed(config.seed, "train", 0)),
            eval_rng: Rng::from_seed(derive_seed(config.seed, "eval", 0)),
            config,
            sampler,
            params,
            adam,
            ema: EmaState::new(),
            step: 0,
            trace: TrainingTrace::default(),
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps
    }

    /// Runs one update, evaluating when the schedule says so. Returns the
    /// record appended to the trace.
    pub fn step(&mut self) -> Result<TraceRecord> {
        self.step += 1;
        let step = self.step;
        let cfg = &self.config;
        let b = cfg.batch_size;
        let diverged = |what| MinfoError::Diverged { step, what };

        let joint = self.sampler.sample(b, &mut self.train_rng)?;
        let marg = match cfg.marginal_mode {
            MarginalMode::Shuffle => marginal_shuffle(&joint, &mut self.train_rng),
            MarginalMode::Resample => marginal_resample(&self.sampler, b, &mut self.train_rng)?,
        };
        let scored = ScoredBatch::new(&self.params, &joint, &marg).map_err(|_| diverged("scores"))?;

        let (value, weights) = match cfg.objective {
            Objective::DonskerVaradhan => {
                let value = dv_value(scored.t_joint(), scored.t_marg()).map_err(|_| diverged("objective"))?;
                if cfg.use_ema_correction {
                    let batch_mean_exp = log_mean_exp(scored.t_marg()).exp();
                    self.ema = ema_update(self.ema, batch_mean_exp, cfg.ema_rate)
                        .map_err(|_| diverged("moving average"))?;
                    let denom = self.ema.value().expect("initialized by update");
                    (value, scored.ema_weights(denom))
                } else {
                    (value, scored.softmax_weights())
                }
            }
            Objective::FDivergence => {
                let value = f_value(scored.t_joint(), scored.t_marg()).map_err(|_| diverged("objective"))?;
                (value, scored.f_weights())
            }
        };
        let mut grad = scored
            .gradient(&self.params, &weights)
            .map_err(|_| diverged("gradient"))?;
        if let Some(cap) = cfg.clip_cap {
            grad = adaptive_clip(&grad, cap)?;
        }
        let grad_norm = grad.norm();
        adam_step(&mut self.adam, &mut self.params, &grad, true).map_err(|_| diverged("gradient"))?;

        let eval = if step % cfg.eval_every == 0 || step == cfg.steps {
            Some(self.evaluate().map_err(|_| diverged("evaluation"))?)
        } else {
            None
        };
        let record = TraceRecord {
            step,
            objective: value,
            ema: self.ema.value(),
            grad_norm,
            eval,
        };
        self.trace.records.push(record);
        Ok(record)
    }

    /// Bound value on a fresh evaluation set from the dedicated stream.
    pub fn evaluate(&mut self) -> Result<f64> {
        let batch = self.sampler.sample(self.config.eval_size(), &mut self.eval_rng)?;
        evaluate_bound(
            &self.params,
            &batch,
            self.config.objective,
            MarginalMode::Shuffle,
            &mut self.eval_rng,
        )
    }

    /// Mean of the most recent `smoothing_window` evaluations.
    pub fn current_estimate(&self) -> Option<f64> {
        let evals: Vec<f64> = self.trace.evaluations().map(|(_, e)| e).collect();
        if evals.is_empty() {
            return None;
        }
        let window = &evals[evals.len().saturating_sub(self.config.smoothing_window)..];
        Some(window.iter().sum::<f64>() / window.len() as f64)
    }

    pub fn finish(self) -> Result<MiEstimate> {
        let nats = self
            .current_estimate()
            .ok_or_else(|| MinfoError::argument("steps", "no evaluation was recorded"))?;
        Ok(MiEstimate {
            nats,
            method: Method::for_objective(self.config.objective),
            eval_points: self.config.eval_size(),
            trace: Some(self.trace),
        })
    }
}

/// Trains a statistics network for `config.steps` updates and reports the
/// smoothed evaluation bound as the MI estimate.
pub fn train_mine<S: JointSampler + ?Sized>(config: &EstimatorConfig, sampler: &S) -> Result<MiEstimate> {
    let mut trainer = MineTrainer::new(config.clone(), sampler)?;
    while !trainer.is_finished() {
        trainer.step()?;
    }
    trainer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{gen_gaussian, GaussianSpec};

    fn small_config() -> EstimatorConfig {
        EstimatorConfig {
            hidden: vec![16],
            batch_size: 32,
            steps: 40,
            eval_every: 10,
            smoothing_window: 2,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_validates() {
        let c = EstimatorConfig::default();
        c.validate().unwrap();
        assert_eq!(c.eval_size(), 2560);
    }

    #[test]
    fn invalid_configs_name_the_key() {
        let cases: Vec<(EstimatorConfig, &str)> = vec![
            (EstimatorConfig { batch_size: 1, ..Default::default() }, "batch_size"),
            (EstimatorConfig { steps: 0, ..Default::default() }, "steps"),
            (EstimatorConfig { ema_rate: 0.0, ..Default::default() }, "ema_rate"),
            (EstimatorConfig { ema_rate: 1.5, ..Default::default() }, "ema_rate"),
            (EstimatorConfig { eval_size: Some(10), ..Default::default() }, "eval_size"),
            (EstimatorConfig { hidden: vec![8, 0], ..Default::default() }, "hidden"),
        ];
        for (cfg, key) in cases {
            match cfg.validate() {
                Err(MinfoError::Config { key: k, .. }) => assert_eq!(k, key),
                other => panic!("expected config error for {key}, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_network_evaluates_to_zero() {
        let mut params = mlp_init(2, &[4], Activation::Relu, 0).unwrap();
        let zeros = vec![0.0; params.param_count()];
        params.set_flat(&zeros).unwrap();
        let batch = gen_gaussian(&GaussianSpec { k: 1, rho: 0.5 }, 64, &mut Rng::from_seed(1)).unwrap();
        for mode in [MarginalMode::Shuffle, MarginalMode::Resample] {
            let v = evaluate_bound(&params, &batch, Objective::DonskerVaradhan, mode, &mut Rng::from_seed(2))
                .unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn evaluation_dv_dominates_f_and_is_deterministic() {
        let params = mlp_init(4, &[8, 8], Activation::Elu, 3).unwrap();
        let batch = gen_gaussian(&GaussianSpec { k: 2, rho: 0.7 }, 200, &mut Rng::from_seed(4)).unwrap();
        let dv = evaluate_bound(&params, &batch, Objective::DonskerVaradhan, MarginalMode::Shuffle, &mut Rng::from_seed(5))
            .unwrap();
        let f = evaluate_bound(&params, &batch, Objective::FDivergence, MarginalMode::Shuffle, &mut Rng::from_seed(5))
            .unwrap();
        assert!(dv >= f);
        let again = evaluate_bound(&params, &batch, Objective::DonskerVaradhan, MarginalMode::Shuffle, &mut Rng::from_seed(5))
            .unwrap();
        assert_eq!(dv.to_bits(), again.to_bits());
        assert!(evaluate_bound(
            &params,
            &gen_gaussian(&GaussianSpec { k: 2, rho: 0.7 }, 1, &mut Rng::from_seed(4)).unwrap(),
            Objective::DonskerVaradhan,
            MarginalMode::Shuffle,
            &mut Rng::from_seed(5)
        )
        .is_err());
    }

    #[test]
    fn trace_steps_increase_and_values_are_finite() {
        let spec = GaussianSpec { k: 1, rho: 0.5 };
        for objective in [Objective::DonskerVaradhan, Objective::FDivergence] {
            for marginal_mode in [MarginalMode::Shuffle, MarginalMode::Resample] {
                let cfg = EstimatorConfig {
                    objective,
                    marginal_mode,
                    clip_cap: Some(1.0),
                    ..small_config()
                };
                let est = train_mine(&cfg, &spec).unwrap();
                let trace = est.trace.unwrap();
                assert_eq!(trace.records.len(), 40);
                for (i, r) in trace.records.iter().enumerate() {
                    assert_eq!(r.step, i + 1);
                    assert!(r.objective.is_finite() && r.grad_norm.is_finite());
                    assert!(r.grad_norm <= 1.0 + 1e-12);
                }
                assert_eq!(trace.evaluations().count(), 4);
                assert!(est.nats.is_finite());
                assert_eq!(est.method, Method::for_objective(objective));
            }
        }
    }

    #[test]
    fn training_is_deterministic_in_seed() {
        let spec = GaussianSpec { k: 1, rho: 0.5 };
        let a = train_mine(&small_config(), &spec).unwrap();
        let b = train_mine(&small_config(), &spec).unwrap();
        assert_eq!(a, b);
        let c = train_mine(&EstimatorConfig { seed: 1, ..small_config() }, &spec).unwrap();
        assert_ne!(a.nats, c.nats);
    }

    #[test]
    fn ema_is_tracked_only_with_correction() {
        let spec = GaussianSpec { k: 1, rho: 0.5 };
        let with = train_mine(&small_config(), &spec).unwrap();
        assert!(with.trace.unwrap().records.iter().all(|r| r.ema.is_some()));
        let cfg = EstimatorConfig {
            use_ema_correction: false,
            ..small_config()
        };
        let without = train_mine(&cfg, &spec).unwrap();
        assert!(without.trace.unwrap().records.iter().all(|r| r.ema.is_none()));
    }

    #[test]
    fn divergence_reports_step_index() {
        let spec = GaussianSpec { k: 1, rho: 0.5 };
        let cfg = EstimatorConfig {
            objective: Objective::FDivergence,
            adam: AdamConfig { lr: 1e6, ..Default::default() },
            steps: 500,
            ..small_config()
        };
        match train_mine(&cfg, &spec) {
            Err(MinfoError::Diverged { step, .. }) => assert!(step >= 1 && step <= 500),
            other => panic!("expected divergence, got {:?}", other.map(|e| e.nats)),
        }
    }
}

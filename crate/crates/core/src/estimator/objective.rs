use serde::{Deserialize, Serialize};

use crate::error::{MinfoError, Result};
use crate::sampling::{MarginalBatch, SampleBatch};
use crate::tensor_nn::{GradBuffer, MlpParams, Tape};

/// Which variational bound is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    /// `E_P[T] - log E_Q[e^T]`
    #[default]
    #[serde(rename = "dv")]
    DonskerVaradhan,
    /// `E_P[T] - E_Q[e^(T-1)]`
    #[serde(rename = "f")]
    FDivergence,
}

impl std::str::FromStr for Objective {
    type Err = MinfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dv" => Ok(Objective::DonskerVaradhan),
            "f" => Ok(Objective::FDivergence),
            other => Err(MinfoError::config(
                "objective",
                format!("expected dv or f, got {other:?}"),
            )),
        }
    }
}

impl Objective {
    pub fn value(self, t_joint: &[f64], t_marg: &[f64]) -> Result<f64> {
        match self {
            Objective::DonskerVaradhan => dv_value(t_joint, t_marg),
            Objective::FDivergence => f_value(t_joint, t_marg),
        }
    }
}

fn check_scores(t_joint: &[f64], t_marg: &[f64]) -> Result<()> {
    if t_joint.is_empty() || t_marg.is_empty() {
        return Err(MinfoError::argument("scores", "both score vectors must be non-empty"));
    }
    if t_joint.iter().chain(t_marg).any(|v| !v.is_finite()) {
        return Err(MinfoError::numeric("statistics-network scores"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `log(mean(exp(t)))` with a max shift.
pub fn log_mean_exp(t: &[f64]) -> f64 {
    let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = t.iter().map(|v| (v - max).exp()).sum();
    max + (s / t.len() as f64).ln()
}

/// Donsker-Varadhan bound `mean(t_joint) - log mean(exp(t_marg))`, nats.
pub fn dv_value(t_joint: &[f64], t_marg: &[f64]) -> Result<f64> {
    check_scores(t_joint, t_marg)?;
    Ok(mean(t_joint) - log_mean_exp(t_marg))
}

/// f-divergence bound `mean(t_joint) - mean(exp(t_marg - 1))`, nats.
pub fn f_value(t_joint: &[f64], t_marg: &[f64]) -> Result<f64> {
    check_scores(t_joint, t_marg)?;
    let penalty = t_marg.iter().map(|v| (v - 1.0).exp()).sum::<f64>() / t_marg.len() as f64;
    let value = mean(t_joint) - penalty;
    if !value.is_finite() {
        return Err(MinfoError::numeric("f_value overflow"));
    }
    Ok(value)
}

/// Running estimate of `E_Q[e^T]` used as the DV gradient denominator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmaState {
    value: Option<f64>,
}

impl EmaState {
    pub fn new() -> Self {
        EmaState { value: None }
    }

    /// A state already holding `value`.
    pub fn initialized(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(MinfoError::numeric(format!("EMA value {value}")));
        }
        Ok(EmaState { value: Some(value) })
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn is_initialized(&self) -> bool {
        self.value.is_some()
    }
}

/// First observation initializes; afterwards `v ← (1-α)·v + α·batch_mean_exp`.
pub fn ema_update(state: EmaState, batch_mean_exp: f64, rate: f64) -> Result<EmaState> {
    if !(batch_mean_exp > 0.0 && batch_mean_exp.is_finite()) {
        return Err(MinfoError::numeric(format!(
            "EMA input must be positive and finite, got {batch_mean_exp}"
        )));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(MinfoError::argument("ema_rate", format!("must lie in (0, 1], got {rate}")));
    }
    // v + α(c - v) is (1-α)v + αc, but exact at the fixed point c = v
    let next = match state.value {
        Some(v) if rate < 1.0 => v + rate * (batch_mean_exp - v),
        _ => batch_mean_exp,
    };
    Ok(EmaState { value: Some(next) })
}

/// One forward pass over the stacked joint and marginal rows.
pub(crate) struct ScoredBatch {
    tape: Tape,
    joint_rows: usize,
}

impl ScoredBatch {
    pub(crate) fn new(params: &MlpParams, joint: &SampleBatch, marg: &MarginalBatch) -> Result<Self> {
        if joint.is_empty() || marg.is_empty() {
            return Err(MinfoError::argument("batch", "joint and marginal batches must be non-empty"));
        }
        let inputs = joint.inputs().vstack(&marg.inputs())?;
        let tape = params.forward_tape(&inputs)?;
        Ok(ScoredBatch {
            tape,
            joint_rows: joint.len(),
        })
    }

    pub(crate) fn t_joint(&self) -> &[f64] {
        &self.tape.output()[..self.joint_rows]
    }

    pub(crate) fn t_marg(&self) -> &[f64] {
        &self.tape.output()[self.joint_rows..]
    }

    /// Ascent gradient of `mean(t_joint) - Σ w_i t_marg_i` with the weights
    /// treated as constants.
    pub(crate) fn gradient(&self, params: &MlpParams, marg_weights: &[f64]) -> Result<GradBuffer> {
        let b = self.joint_rows as f64;
        let cot: Vec<f64> = std::iter::repeat_n(1.0 / b, self.joint_rows)
            .chain(marg_weights.iter().map(|w| -w))
            .collect();
        let g = params.backward(&self.tape, &cot)?;
        if !g.is_finite() {
            return Err(MinfoError::numeric("gradient"));
        }
        Ok(g)
    }

    /// Within-batch softmax weights `e^{t_i} / Σ_j e^{t_j}`.
    pub(crate) fn softmax_weights(&self) -> Vec<f64> {
        let t = self.t_marg();
        let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = t.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    /// `e^{t_i} / (m·C)` for a fixed denominator `C`.
    pub(crate) fn ema_weights(&self, denominator: f64) -> Vec<f64> {
        let t = self.t_marg();
        let shift = denominator.ln() + (t.len() as f64).ln();
        t.iter().map(|v| (v - shift).exp()).collect()
    }

    /// `e^{t_i - 1} / m`, the exact f-bound weights.
    pub(crate) fn f_weights(&self) -> Vec<f64> {
        let t = self.t_marg();
        let m = t.len() as f64;
        t.iter().map(|v| (v - 1.0).exp() / m).collect()
    }
}

/// Minibatch gradient of the DV bound (ascent direction) with the
/// denominator estimated on the same marginal batch. Returns the gradient
/// and the batch DV value.
pub fn naive_gradient(
    params: &MlpParams,
    joint: &SampleBatch,
    marg: &MarginalBatch,
) -> Result<(GradBuffer, f64)> {
    let scored = ScoredBatch::new(params, joint, marg)?;
    let value = dv_value(scored.t_joint(), scored.t_marg())?;
    let grad = scored.gradient(params, &scored.softmax_weights())?;
    Ok((grad, value))
}

/// DV gradient with the denominator replaced by the moving average `ema`:
/// the gradient of `mean(t_joint) - mean(e^{t_marg}) / C` with `C` held
/// fixed. Returns the gradient and the batch DV value.
pub fn corrected_gradient(
    params: &MlpParams,
    joint: &SampleBatch,
    marg: &MarginalBatch,
    ema: &EmaState,
) -> Result<(GradBuffer, f64)> {
    let denominator = ema
        .value()
        .ok_or_else(|| MinfoError::argument("ema", "moving average is not initialized"))?;
    let scored = ScoredBatch::new(params, joint, marg)?;
    let value = dv_value(scored.t_joint(), scored.t_marg())?;
    let grad = scored.gradient(params, &scored.ema_weights(denominator))?;
    Ok((grad, value))
}

/// Exact minibatch gradient of the f-divergence bound, with its value.
pub fn f_gradient(
    params: &MlpParams,
    joint: &SampleBatch,
    marg: &MarginalBatch,
) -> Result<(GradBuffer, f64)> {
    let scored = ScoredBatch::new(params, joint, marg)?;
    let value = f_value(scored.t_joint(), scored.t_marg())?;
    let grad = scored.gradient(params, &scored.f_weights())?;
    Ok((grad, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{gen_gaussian, marginal_shuffle, GaussianSpec, Rng};
    use crate::tensor_nn::{mlp_init, Activation, Matrix};

    const E: f64 = std::f64::consts::E;

    #[test]
    fn dv_hand_values() {
        assert_eq!(dv_value(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        for c in [-3.0, 0.7, 250.0] {
            assert!(dv_value(&[c, c], &[c, c]).unwrap().abs() < 1e-12);
        }
        let expected = 1.0 - ((1.0 + E * E) / 2.0).ln();
        assert!((dv_value(&[1.0, 1.0], &[0.0, 2.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - -0.433781).abs() < 1e-6);
    }

    #[test]
    fn f_hand_values() {
        assert_eq!(f_value(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!((f_value(&[0.0, 0.0], &[0.0, 0.0]).unwrap() + (-1.0f64).exp()).abs() < 1e-15);
        let v = f_value(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert!((v - (1.0 - (1.0 / E + E) / 2.0)).abs() < 1e-15);
        assert!((v - -0.543081).abs() < 1e-6);
        assert!(dv_value(&[1.0, 1.0], &[0.0, 2.0]).unwrap() >= v);
    }

    #[test]
    fn f_is_not_shift_invariant() {
        let a = f_value(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let b = f_value(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((a - b).abs() > 0.3);
    }

    #[test]
    fn large_marginal_scores_stay_finite() {
        let v = dv_value(&[1.0], &[700.0, 690.0, -5.0]).unwrap();
        assert!(v.is_finite());
        assert!(f_value(&[0.0], &[800.0]).is_err());
    }

    #[test]
    fn non_finite_and_empty_rejected() {
        assert!(matches!(dv_value(&[f64::NAN], &[0.0]), Err(MinfoError::Numeric { .. })));
        assert!(dv_value(&[], &[0.0]).is_err());
        assert!(f_value(&[0.0], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn ema_cases() {
        let s = ema_update(EmaState::new(), 5.0, 0.01).unwrap();
        assert_eq!(s.value(), Some(5.0));
        let s = ema_update(s, 7.0, 1.0).unwrap();
        assert_eq!(s.value(), Some(7.0));
        let s = ema_update(EmaState::initialized(2.0).unwrap(), 4.0, 0.5).unwrap();
        assert_eq!(s.value(), Some(3.0));
        let mut c = EmaState::initialized(1.5).unwrap();
        for _ in 0..10 {
            c = ema_update(c, 1.5, 0.3).unwrap();
            assert_eq!(c.value(), Some(1.5));
        }
        assert!(ema_update(c, 0.0, 0.1).is_err());
        assert!(ema_update(c, -1.0, 0.1).is_err());
        assert!(ema_update(c, 1.0, 0.0).is_err());
    }

    fn setup(seed: u64, b: usize) -> (MlpParams, SampleBatch, MarginalBatch) {
        let spec = GaussianSpec { k: 2, rho: 0.6 };
        let mut rng = Rng::from_seed(seed);
        let joint = gen_gaussian(&spec, b, &mut rng).unwrap();
        let marg = marginal_shuffle(&joint, &mut rng);
        let params = mlp_init(4, &[12, 12], Activation::Elu, seed).unwrap();
        (params, joint, marg)
    }

    #[test]
    fn constant_scores_give_uniform_weights() {
        let (mut params, joint, marg) = setup(1, 8);
        let zeros = vec![0.0; params.param_count()];
        params.set_flat(&zeros).unwrap();
        let scored = ScoredBatch::new(&params, &joint, &marg).unwrap();
        for w in scored.softmax_weights() {
            assert!((w - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicating_rows_keeps_naive_gradient() {
        let (params, joint, marg) = setup(2, 16);
        let (g1, v1) = naive_gradient(&params, &joint, &marg).unwrap();
        let dup = |m: &Matrix| m.vstack(m).unwrap();
        let joint2 = SampleBatch::new(dup(&joint.x), dup(&joint.z)).unwrap();
        let marg2 = MarginalBatch {
            x: dup(&marg.x),
            z_bar: dup(&marg.z_bar),
        };
        let (g2, v2) = naive_gradient(&params, &joint2, &marg2).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn corrected_matches_naive_at_batch_denominator() {
        let (params, joint, marg) = setup(3, 32);
        let scored = ScoredBatch::new(&params, &joint, &marg).unwrap();
        let denom = log_mean_exp(scored.t_marg()).exp();
        let (gn, vn) = naive_gradient(&params, &joint, &marg).unwrap();
        let (gc, vc) =
            corrected_gradient(&params, &joint, &marg, &EmaState::initialized(denom).unwrap()).unwrap();
        assert_eq!(vn, vc);
        for (a, b) in gn.to_flat().iter().zip(gc.to_flat()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn doubling_denominator_halves_marginal_term() {
        let (params, joint, marg) = setup(4, 16);
        let joint_only = {
            let scored = ScoredBatch::new(&params, &joint, &marg).unwrap();
            scored.gradient(&params, &vec![0.0; marg.len()]).unwrap()
        };
        let marginal_term = |c: f64| {
            let (mut g, _) =
                corrected_gradient(&params, &joint, &marg, &EmaState::initialized(c).unwrap()).unwrap();
            let mut neg = joint_only.clone();
            neg.scale(-1.0);
            g.add_assign(&neg);
            g.to_flat()
        };
        let one = marginal_term(1.3);
        let two = marginal_term(2.6);
        for (a, b) in one.iter().zip(&two) {
            assert!((a / 2.0 - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn corrected_requires_initialized_ema() {
        let (params, joint, marg) = setup(5, 4);
        assert!(corrected_gradient(&params, &joint, &marg, &EmaState::new()).is_err());
    }
}

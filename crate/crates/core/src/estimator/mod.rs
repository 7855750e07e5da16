//! Neural estimation of mutual information: the DV and f-divergence bounds,
//! minibatch gradients with optional moving-average denominator, and the
//! training/evaluation loop.

mod objective;
mod train;

pub use objective::{
    corrected_gradient, dv_value, ema_update, f_gradient, f_value, log_mean_exp, naive_gradient,
    EmaState, Objective,
};
pub use train::{
    evaluate_bound, train_mine, EstimatorConfig, Method, MiEstimate, MineTrainer, TraceRecord,
    TrainingTrace,
};

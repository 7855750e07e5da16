//! # minfo
//!
//! Mutual information estimation between continuous random vectors.
//!
//! The neural estimator trains a small statistics network `T(x, z)` to
//! maximize a variational lower bound on `KL(P_XZ ‖ P_X ⊗ P_Z)`:
//!
//! | Bound | Value |
//! |-------|-------|
//! | Donsker-Varadhan | `E_P[T] - ln E_Q[e^T]` |
//! | f-divergence | `E_P[T] - E_Q[e^(T-1)]` |
//!
//! The DV bound is always at least the f bound for the same `T`. Minibatch
//! DV gradients are biased through the `ln E_Q` denominator; replacing it by
//! a moving average reduces that bias.
//!
//! Alongside sit a k-NN baseline ([`baselines::ksg_estimate`]), closed-form
//! ground truth for correlated Gaussians, a sample-complexity calculator, and
//! (behind the default `cli` feature) a seeded experiment harness.
//!
//! ```
//! use minfo::estimator::{train_mine, EstimatorConfig};
//! use minfo::sampling::GaussianSpec;
//!
//! let data = GaussianSpec::new(1, 0.0).unwrap();
//! let cfg = EstimatorConfig { hidden: vec![16], batch_size: 64, steps: 20, ..Default::default() };
//! let est = train_mine(&cfg, &data).unwrap();
//! assert!(est.nats.is_finite());
//! ```

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod sampling;
pub mod tensor_nn;
pub mod theory;

#[cfg(feature = "cli")]
pub mod harness;

pub use error::{MinfoError, Result};

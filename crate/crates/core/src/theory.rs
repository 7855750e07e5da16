//! Sample-complexity bound for the empirical neural information measure,
//! and a checker for the DV ≥ f dominance.

use serde::{Deserialize, Serialize};

use crate::error::{MinfoError, Result};
use crate::estimator::{dv_value, f_value};

/// Inputs of the sample-complexity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    /// Parameter-space dimension.
    pub d: f64,
    /// Bound on `|T|`.
    pub m: f64,
    /// Lipschitz constant of `T` in the parameters.
    pub l: f64,
    /// Bound on the parameter norm.
    pub k: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Default for ComplexityInputs {
    fn default() -> Self {
        ComplexityInputs { d: 1.0, m: 1.0, l: 1.0, k: 1.0, eps: 0.1, delta: 0.05 }
    }
}

/// Smallest integer `n` with
/// `n ≥ 2M²(d·ln(16KL√d/ε) + 2dM + ln(2/δ)) / ε²`.
pub fn sample_complexity(inputs: &ComplexityInputs) -> Result<u64> {
    let ComplexityInputs { d, m, l, k, eps, delta } = *inputs;
    for (name, v) in [("d", d), ("m", m), ("l", l), ("k", k), ("eps", eps), ("delta", delta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MinfoError::argument(name, format!("must be positive and finite, got {v}")));
        }
    }
    if delta >= 1.0 {
        return Err(MinfoError::argument("delta", "must be below 1"));
    }
    let covering = 16.0 * k * l * d.sqrt() / eps;
    if covering <= 1.0 {
        return Err(MinfoError::argument(
            "eps",
            format!("16·K·L·√d/ε = {covering} must exceed 1"),
        ));
    }
    let n = 2.0 * m * m * (d * covering.ln() + 2.0 * d * m + (2.0 / delta).ln()) / (eps * eps);
    Ok(n.ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    pub dv: f64,
    pub f: f64,
    pub holds: bool,
}

/// Evaluates both bounds on the same scores; `holds` iff `dv ≥ f - 1e-12`.
pub fn dv_dominates_f_check(t_joint: &[f64], t_marg: &[f64]) -> Result<DominanceReport> {
    let dv = dv_value(t_joint, t_marg)?;
    let f = f_value(t_joint, t_marg)?;
    Ok(DominanceReport {
        dv,
        f,
        holds: dv >= f - 1e-12,
    })
}

use super::matrix::Matrix;
use super::mlp::{mlp_backward, Activation, GradBuffer, MlpParams};
use crate::error::{MinfoError, Result};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative errors, so that entries which are zero
/// on both sides compare as equal.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameters left out because the ±step probe crossed a ReLU kink.
    pub skipped: usize,
    pub pass: bool,
}

/// `|a - b| / max(|a| + |b|, REL_ERR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(REL_ERR_FLOOR)
}

/// Checks `mlp_backward` against central differences of the batch mean
/// `(1/b) Σ T(row)` on every parameter.
///
/// For ReLU networks a parameter is skipped when either probe changes which
/// units are active: the difference quotient then straddles a kink and says
/// nothing about the derivative. A pre-activation sitting exactly at zero
/// (zero biases behind a fully inactive layer) is not differentiable at all
/// and shows up as a mismatch.
pub fn grad_check(params: &MlpParams, inputs: &Matrix, tol: f64) -> Result<GradCheckReport> {
    let cot = mean_cotangent(inputs.rows())?;
    let analytic = mlp_backward(params, inputs, &cot)?;
    compare_with_finite_differences(params, inputs, &analytic, tol)
}

/// Compares a supplied gradient of the batch mean of `T` with central
/// differences. Used by [`grad_check`]; exposed so that a corrupted gradient
/// can be checked.
pub fn compare_with_finite_differences(
    params: &MlpParams,
    inputs: &Matrix,
    analytic: &GradBuffer,
    tol: f64,
) -> Result<GradCheckReport> {
    let cot = mean_cotangent(inputs.rows())?;
    if !analytic.is_congruent(params) {
        return Err(MinfoError::shape("grad_check", "congruent gradient", "mismatch"));
    }
    let track_kinks = params.activation() == Activation::Relu;
    let base_units = params.forward_tape(inputs)?.active_units();
    // objective value, and whether the active set matches the base point
    let objective = |p: &MlpParams| -> Result<(f64, bool)> {
        let tape = p.forward_tape(inputs)?;
        let same = !track_kinks || tape.active_units() == base_units;
        Ok((tape.output().iter().zip(&cot).map(|(t, c)| t * c).sum(), same))
    };
    let base = params.to_flat();
    let analytic = analytic.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut max_rel_err: f64 = 0.0;
    let mut skipped = 0;
    for i in 0..base.len() {
        flat[i] = base[i] + FD_STEP;
        probe.set_flat(&flat)?;
        let (plus, plus_smooth) = objective(&probe)?;
        flat[i] = base[i] - FD_STEP;
        probe.set_flat(&flat)?;
        let (minus, minus_smooth) = objective(&probe)?;
        flat[i] = base[i];
        if !(plus_smooth && minus_smooth) {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        max_rel_err = max_rel_err.max(relative_error(analytic[i], numeric));
    }
    Ok(GradCheckReport {
        max_rel_err,
        skipped,
        pass: max_rel_err <= tol,
    })
}

fn mean_cotangent(rows: usize) -> Result<Vec<f64>> {
    if rows == 0 {
        return Err(MinfoError::argument("inputs", "batch must be non-empty"));
    }
    Ok(vec![1.0 / rows as f64; rows])
}

/// Rescales `g_m` to Frobenius norm `min(‖g_m‖, g_u_norm)`, keeping its
/// direction. A zero `g_m` is returned unchanged.
pub fn adaptive_clip(g_m: &GradBuffer, g_u_norm: f64) -> Result<GradBuffer> {
    if !(g_u_norm >= 0.0) {
        return Err(MinfoError::argument(
            "g_u_norm",
            format!("must be non-negative, got {g_u_norm}"),
        ));
    }
    let norm = g_m.norm();
    let mut out = g_m.clone();
    if norm > 0.0 && g_u_norm < norm {
        out.scale(g_u_norm / norm);
    }
    Ok(out)
}

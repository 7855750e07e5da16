//! Ground truth for the Gaussian family and the Kraskov–Stögbauer–Grassberger
//! k-nearest-neighbour estimator.

use serde::{Deserialize, Serialize};

use crate::error::{MinfoError, Result};
use crate::estimator::{MiEstimate, Method};
use crate::sampling::{GaussianSpec, Rng, SampleBatch};
use crate::tensor_nn::Matrix;

/// Closed-form MI of the componentwise-correlated Gaussian pair,
/// `-(k/2)·ln(1 - rho²)` nats.
pub fn gaussian_mi_analytic(spec: &GaussianSpec) -> Result<f64> {
    spec.validate()?;
    // written as ln(1/(1-rho²)) so that rho = 0 gives +0, not -0
    Ok(0.5 * spec.k as f64 * (1.0 / (1.0 - spec.rho * spec.rho)).ln())
}

/// Digamma function for `x > 0`: recurrence up to `x ≥ 6`, then the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(MinfoError::argument("x", format!("digamma needs finite x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_2n / (2n)
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 * inv - series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsgConfig {
    /// Neighbour count.
    pub k: usize,
    /// Seed for the tie-breaking jitter.
    pub seed: u64,
}

impl Default for KsgConfig {
    fn default() -> Self {
        KsgConfig { k: 3, seed: 0 }
    }
}

/// Magnitude of the jitter applied when duplicate joint points exist.
pub const TIE_JITTER: f64 = 1e-10;

/// KSG estimator, first variant: `ψ(k) + ψ(n) - ⟨ψ(n_x + 1) + ψ(n_z + 1)⟩`
/// with max-norm distances and strict marginal counts. The raw value is
/// returned, it may be negative.
pub fn ksg_estimate(batch: &SampleBatch, cfg: &KsgConfig) -> Result<MiEstimate> {
    let n = batch.len();
    if cfg.k == 0 {
        return Err(MinfoError::argument("k", "neighbour count must be at least 1"));
    }
    if n <= cfg.k {
        return Err(MinfoError::argument(
            "k",
            format!("need more than k={} points, got {n}", cfg.k),
        ));
    }
    if !batch.x.is_finite() || !batch.z.is_finite() {
        return Err(MinfoError::numeric("ksg input"));
    }
    let (x, z) = if has_duplicate_rows(batch) {
        let mut rng = Rng::from_seed(cfg.seed);
        (jitter(&batch.x, &mut rng), jitter(&batch.z, &mut rng))
    } else {
        (batch.x.clone(), batch.z.clone())
    };

    let mut joint_dist = vec![0.0; n];
    let mut x_dist = vec![0.0; n];
    let mut z_dist = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n - 1);
    let mut marginal_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dx = chebyshev(x.row(i), x.row(j));
            let dz = chebyshev(z.row(i), z.row(j));
            x_dist[j] = dx;
            z_dist[j] = dz;
            joint_dist[j] = dx.max(dz);
        }
        scratch.clear();
        scratch.extend((0..n).filter(|&j| j != i).map(|j| joint_dist[j]));
        let (_, kth, _) = scratch.select_nth_unstable_by(cfg.k - 1, f64::total_cmp);
        let eps = *kth;
        let count = |d: &[f64]| (0..n).filter(|&j| j != i && d[j] < eps).count();
        let n_x = count(&x_dist);
        let n_z = count(&z_dist);
        marginal_sum += digamma((n_x + 1) as f64)? + digamma((n_z + 1) as f64)?;
    }
    let nats = digamma(cfg.k as f64)? + digamma(n as f64)? - marginal_sum / n as f64;
    Ok(MiEstimate {
        nats,
        method: Method::Ksg,
        eval_points: n,
        trace: None,
    })
}

#[inline]
fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn has_duplicate_rows(batch: &SampleBatch) -> bool {
    let joint = batch.inputs();
    let mut rows: Vec<&[f64]> = (0..joint.rows()).map(|r| joint.row(r)).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.windows(2).any(|w| w[0] == w[1])
}

fn jitter(m: &Matrix, rng: &mut Rng) -> Matrix {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        *v += rng.uniform(-TIE_JITTER, TIE_JITTER);
    }
    out
}

//! Seeded random streams, synthetic datasets with known dependence, and the
//! two ways of building a product-of-marginals batch.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MinfoError, Result};
use crate::tensor_nn::Matrix;

/// Explicit, seedable random stream. Never global; clone to fork a copy of
/// the current state.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..hi)
    }

    /// Uniform random permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.inner.random_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pure seed derivation from a base seed, a text tag and an index. Stable
/// across platforms and releases.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag, then mixed with the other two parts
    let tag_hash = tag
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix64(mix64(mix64(base) ^ tag_hash) ^ index)
}

/// Paired samples `(x_i, z_i)` from the joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub x: Matrix,
    pub z: Matrix,
}

impl SampleBatch {
    pub fn new(x: Matrix, z: Matrix) -> Result<Self> {
        if x.rows() != z.rows() {
            return Err(MinfoError::shape("SampleBatch::new", x.rows(), z.rows()));
        }
        if x.rows() == 0 {
            return Err(MinfoError::argument("batch", "must contain at least one row"));
        }
        Ok(SampleBatch { x, z })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Rows `[x_i | z_i]` as network input.
    pub fn inputs(&self) -> Matrix {
        self.x.hstack(&self.z).expect("rows checked on construction")
    }
}

/// Samples `(x_i, z̄_i)` with `z̄` decoupled from `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBatch {
    pub x: Matrix,
    pub z_bar: Matrix,
}

impl MarginalBatch {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn inputs(&self) -> Matrix {
        self.x.hstack(&self.z_bar).expect("rows checked on construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalMode {
    /// Permute the `z` rows of the joint batch.
    #[default]
    Shuffle,
    /// Take `z` from an independent joint draw.
    Resample,
}

impl std::str::FromStr for MarginalMode {
    type Err = MinfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffle" => Ok(MarginalMode::Shuffle),
            "resample" => Ok(MarginalMode::Resample),
            other => Err(MinfoError::config(
                "marginal",
                format!("expected shuffle or resample, got {other:?}"),
            )),
        }
    }
}

/// A source of joint samples.
pub trait JointSampler {
    fn x_dim(&self) -> usize;
    fn z_dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleBatch>;
}

impl<T: JointSampler + ?Sized> JointSampler for &T {
    fn x_dim(&self) -> usize {
        (**self).x_dim()
    }

    fn z_dim(&self) -> usize {
        (**self).z_dim()
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
        (**self).sample(n, rng)
    }
}

/// `k` independent component pairs, each standard bivariate normal with
/// correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub k: usize,
    pub rho: f64,
}

impl GaussianSpec {
    pub fn new(k: usize, rho: f64) -> Result<Self> {
        let spec = GaussianSpec { k, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(MinfoError::argument(
                "rho",
                format!("|rho| must be < 1, got {}", self.rho),
            ));
        }
        if self.k == 0 {
            return Err(MinfoError::argument("k", "component count must be at least 1"));
        }
        Ok(())
    }
}

pub fn gen_gaussian(spec: &GaussianSpec, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
    spec.validate()?;
    if n == 0 {
        return Err(MinfoError::argument("n", "must be at least 1"));
    }
    let k = spec.k;
    let tail = (1.0 - spec.rho * spec.rho).sqrt();
    let mut x = Matrix::zeros(n, k);
    let mut z = Matrix::zeros(n, k);
    for r in 0..n {
        for c in 0..k {
            let u = rng.normal();
            let v = rng.normal();
            x.set(r, c, u);
            z.set(r, c, spec.rho * u + tail * v);
        }
    }
    SampleBatch::new(x, z)
}

impl JointSampler for GaussianSpec {
    fn x_dim(&self) -> usize {
        self.k
    }

    fn z_dim(&self) -> usize {
        self.k
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
        gen_gaussian(self, n, rng)
    }
}

/// Deterministic part of `z = f(x) + σ·ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Cube,
    Sine,
}

impl Transform {
    pub const ALL: [Transform; 3] = [Transform::Identity, Transform::Cube, Transform::Sine];

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Cube => v * v * v,
            Transform::Sine => v.sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "x",
            Transform::Cube => "x3",
            Transform::Sine => "sin",
        }
    }
}

/// `x ~ U(-1, 1)^dim`, `z = f(x) + sigma·ε` with `ε ~ N(0, I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSpec {
    pub f: Transform,
    pub sigma: f64,
    pub dim: usize,
}

impl NonlinearSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(MinfoError::argument("sigma", "must be finite and non-negative"));
        }
        if self.dim == 0 {
            return Err(MinfoError::argument("dim", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn gen_nonlinear(spec: &NonlinearSpec, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
    spec.validate()?;
    if n == 0 {
        return Err(MinfoError::argument("n", "must be at least 1"));
    }
    let mut x = Matrix::zeros(n, spec.dim);
    let mut z = Matrix::zeros(n, spec.dim);
    for r in 0..n {
        for c in 0..spec.dim {
            let u = rng.uniform(-1.0, 1.0);
            x.set(r, c, u);
            let noise = if spec.sigma > 0.0 { spec.sigma * rng.normal() } else { 0.0 };
            z.set(r, c, spec.f.apply(u) + noise);
        }
    }
    SampleBatch::new(x, z)
}

impl JointSampler for NonlinearSpec {
    fn x_dim(&self) -> usize {
        self.dim
    }

    fn z_dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
        gen_nonlinear(self, n, rng)
    }
}

/// Either synthetic family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DataSpec {
    Gaussian(GaussianSpec),
    Nonlinear(NonlinearSpec),
}

impl JointSampler for DataSpec {
    fn x_dim(&self) -> usize {
        match self {
            DataSpec::Gaussian(g) => g.x_dim(),
            DataSpec::Nonlinear(n) => n.x_dim(),
        }
    }

    fn z_dim(&self) -> usize {
        match self {
            DataSpec::Gaussian(g) => g.z_dim(),
            DataSpec::Nonlinear(n) => n.z_dim(),
        }
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleBatch> {
        match self {
            DataSpec::Gaussian(g) => g.sample(n, rng),
            DataSpec::Nonlinear(s) => s.sample(n, rng),
        }
    }
}

/// Pairs each `x_i` with `z_{π(i)}` for a uniform random permutation `π`.
pub fn marginal_shuffle(batch: &SampleBatch, rng: &mut Rng) -> MarginalBatch {
    let perm = rng.permutation(batch.len());
    MarginalBatch {
        x: batch.x.clone(),
        z_bar: batch.z.select_rows(&perm),
    }
}

/// `x` from one fresh joint draw, `z̄` from a second, independent draw.
pub fn marginal_resample<S: JointSampler + ?Sized>(
    sampler: &S,
    b: usize,
    rng: &mut Rng,
) -> Result<MarginalBatch> {
    let first = sampler.sample(b, rng)?;
    let second = sampler.sample(b, rng)?;
    Ok(MarginalBatch {
        x: first.x,
        z_bar: second.z,
    })
}

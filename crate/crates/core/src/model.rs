//! Seeded generators for the planted and pure-noise models.
//!
//! Randomness comes from ChaCha20 keyed by the instance seed, with one
//! stream per quantity so that each draw sequence is fixed by the seed alone:
//!
//! | stream | contents                                   |
//! |--------|--------------------------------------------|
//! | 1      | design `X`, row-major                      |
//! | 2      | noise `W` (planted) or response `Y` (pure) |
//! | 3      | planted support permutation                |
//!
//! Because the response stream of the pure-noise model does not depend on
//! `p`, regenerating with a different `p` leaves `Y` unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const STREAM_DESIGN: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_SUPPORT: u64 = 3;

/// Dimensions, noise level and seed of one model realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ambient dimension.
    pub p: usize,
    /// Sparsity.
    pub k: usize,
    /// Number of samples.
    pub n: usize,
    /// Noise variance σ².
    pub sigma2: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelParams {
    pub fn new(p: usize, k: usize, n: usize, sigma2: f64, seed: u64) -> Self {
        ModelParams { p, k, n, sigma2, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        if self.k > self.p {
            return Err(Error::InvalidParams(format!("k = {} exceeds p = {}", self.k, self.p)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParams(format!("sigma2 = {} must be finite and non-negative", self.sigma2)));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn with_n(self, n: usize) -> Self {
        ModelParams { n, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ModelParams { seed, ..self }
    }
}

/// One realization of either model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub params: ModelParams,
    /// `n x p` design, row-major.
    pub design: Vec<f64>,
    /// Sorted planted support; empty for pure-noise instances.
    pub planted_support: Vec<usize>,
    /// Noise vector `W`. For pure-noise instances this equals the response.
    pub noise: Vec<f64>,
    pub response: Vec<f64>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn is_planted(&self) -> bool {
        !self.planted_support.is_empty()
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.design[row * self.params.p + col]
    }

    /// Column `j` copied out of the row-major design.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.entry(i, j)).collect()
    }

    /// Planted membership mask over the `p` columns.
    pub fn planted_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.p()];
        for &j in &self.planted_support {
            mask[j] = true;
        }
        mask
    }

    /// Overlap index ℓ = k − |support ∩ planted|, or `None` for pure noise.
    pub fn overlap_ell(&self, support: &[usize]) -> Option<usize> {
        if !self.is_planted() {
            return None;
        }
        let common = support.iter().filter(|j| self.planted_support.binary_search(j).is_ok()).count();
        Some(self.k() - common)
    }

    /// Checks structural consistency (dimensions, sorted support).
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let (n, p, k) = (self.n(), self.p(), self.k());
        if self.design.len() != n * p || self.noise.len() != n || self.response.len() != n {
            return Err(Error::Format("array lengths disagree with dimensions".into()));
        }
        if self.is_planted() {
            if self.planted_support.len() != k {
                return Err(Error::Format(format!("planted support has {} indices, k = {k}", self.planted_support.len())));
            }
            if self.planted_support.windows(2).any(|w| w[0] >= w[1]) || self.planted_support[k - 1] >= p {
                return Err(Error::Format("planted support must be sorted, distinct and below p".into()));
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_vec(rng: &mut ChaCha20Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            scale * z
        })
        .collect()
}

/// Uniform k-subset of `[0, p)` via a Fisher–Yates prefix, returned sorted.
fn planted_support(seed: u64, p: usize, k: usize) -> Vec<usize> {
    let mut rng = stream(seed, STREAM_SUPPORT);
    let mut perm: Vec<usize> = (0..p).collect();
    for i in 0..k {
        let j = rng.random_range(i..p);
        perm.swap(i, j);
    }
    let mut support = perm[..k].to_vec();
    support.sort_unstable();
    support
}

/// `Y_i = sum_{j in support} X_ij + W_i`, columns added in ascending order.
pub fn assemble_response(design: &[f64], p: usize, support: &[usize], noise: &[f64]) -> Vec<f64> {
    noise
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let row = &design[i * p..(i + 1) * p];
            let mut acc = 0.0;
            for &j in support {
                acc += row[j];
            }
            acc + w
        })
        .collect()
}

/// Draws a planted instance `Y = Xβ* + W`.
pub fn generate_instance(params: &ModelParams) -> Result<Instance> {
    params.validate()?;
    let ModelParams { p, k, n, sigma2, seed } = *params;
    let design = gaussian_vec(&mut stream(seed, STREAM_DESIGN), n * p, 1.0);
    let noise = gaussian_vec(&mut stream(seed, STREAM_NOISE), n, sigma2.sqrt());
    let support = planted_support(seed, p, k);
    let response = assemble_response(&design, p, &support, &noise);
    Ok(Instance { params: *params, design, planted_support: support, noise, response })
}

/// Draws a pure-noise instance: `Y ~ N(0, σ² I)` independent of `X`.
pub fn generate_pure_noise(params: &ModelParams) -> Result<Instance> {
    params.validate()?;
    let ModelParams { p, n, sigma2, seed, .. } = *params;
    let design = gaussian_vec(&mut stream(seed, STREAM_DESIGN), n * p, 1.0);
    let response = gaussian_vec(&mut stream(seed, STREAM_NOISE), n, sigma2.sqrt());
    Ok(Instance { params: *params, design, planted_support: Vec::new(), noise: response.clone(), response })
}

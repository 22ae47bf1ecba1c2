//! Sparse source generation and diffusion of sources through a graph filter.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{RbdgError, Result};
use crate::graph::FilterPair;

/// Role of a stacked signal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalRole {
    Sources,
    Observations,
    Estimate,
}

/// N x M matrix of M graph signals stacked as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    entries: DMatrix<f64>,
    role: SignalRole,
}

impl SignalMatrix {
    pub fn new(entries: DMatrix<f64>, role: SignalRole) -> Self {
        SignalMatrix { entries, role }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    pub fn role(&self) -> SignalRole {
        self.role
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// Number of nonzero entries in one column.
    pub fn column_support(&self, col: usize) -> usize {
        self.entries.column(col).iter().filter(|v| **v != 0.0).count()
    }
}

/// Distribution of the nonzero source values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDist {
    /// Unit injections: every selected source node carries the value 1.
    Unit,
    StandardNormal,
}

/// Configuration for source generation.
#[derive(Debug, Clone, Copy)]
pub struct GenerationConfig {
    /// Nonzeros per source column.
    pub k_sparsity: usize,
    /// Noise power relative to the signal: E||W||_F^2 / ||H X||_F^2.
    pub noise_power: f64,
    pub value_dist: ValueDist,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn noiseless(k_sparsity: usize, seed: u64) -> Self {
        GenerationConfig {
            k_sparsity,
            noise_power: 0.0,
            value_dist: ValueDist::StandardNormal,
            seed,
        }
    }

    pub fn unit(k_sparsity: usize, seed: u64) -> Self {
        GenerationConfig {
            value_dist: ValueDist::Unit,
            ..Self::noiseless(k_sparsity, seed)
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_sparsity == 0 || self.k_sparsity > n {
            return Err(RbdgError::InvalidParameter(format!(
                "sparsity must lie in 1..={n}, got {}",
                self.k_sparsity
            )));
        }
        if !(self.noise_power >= 0.0) {
            return Err(RbdgError::InvalidParameter(format!(
                "noise power must be nonnegative, got {}",
                self.noise_power
            )));
        }
        Ok(())
    }
}

/// Generates M source columns, each supported on exactly K nodes chosen
/// uniformly without replacement, with i.i.d. standard normal values.
pub fn generate_sources(n: usize, m: usize, cfg: &GenerationConfig) -> Result<SignalMatrix> {
    cfg.validate(n)?;
    if m == 0 {
        return Err(RbdgError::InvalidParameter(
            "need at least one signal".to_string(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut entries = DMatrix::<f64>::zeros(n, m);
    for col in 0..m {
        let support = rand::seq::index::sample(&mut rng, n, cfg.k_sparsity);
        for row in support {
            let value: f64 = match cfg.value_dist {
                ValueDist::Unit => 1.0,
                ValueDist::StandardNormal => StandardNormal.sample(&mut rng),
            };
            entries[(row, col)] = value;
        }
    }
    Ok(SignalMatrix::new(entries, SignalRole::Sources))
}

/// Diffuses sources through the filter: Y = H X + W, where W has i.i.d.
/// Gaussian entries scaled so that E||W||_F^2 / ||H X||_F^2 = noise_power.
/// With `noise_power = 0` the output is exactly H X.
pub fn diffuse(
    filter: &FilterPair,
    x: &SignalMatrix,
    noise_power: f64,
    seed: u64,
) -> Result<SignalMatrix> {
    if filter.n() != x.n() {
        return Err(RbdgError::DimensionMismatch(format!(
            "filter is {}x{} but sources have {} rows",
            filter.n(),
            filter.n(),
            x.n()
        )));
    }
    if !(noise_power >= 0.0) {
        return Err(RbdgError::InvalidParameter(format!(
            "noise power must be nonnegative, got {noise_power}"
        )));
    }
    let mut y = &filter.forward * x.entries();
    if noise_power > 0.0 {
        let sigma = (noise_power * y.norm_squared() / (y.nrows() * y.ncols()) as f64).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    Ok(SignalMatrix::new(y, SignalRole::Observations))
}

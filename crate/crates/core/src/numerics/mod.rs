//! Dense numerics for the policy network: parameter storage, a recording
//! tape for reverse-mode gradients, residual MLP blocks, Adam and the RBF
//! scalar embedding.

mod adam;
mod mlp;
mod tape;
mod weights;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use mlp::{MlpBlock, Piece};
pub use tape::{bce_with_logits, margin_rank, sigmoid, Tape, Var};
pub use weights::{read_weights, write_weights, WeightHeader, WEIGHT_FORMAT_VERSION};

/// Row-major dense matrix; vectors are single rows.
pub type Matrix = Array2<f64>;

/// Named parameter matrices addressed by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &Matrix {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.values[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(String, [usize; 2])> {
        self.iter().map(|(n, m)| (n.to_string(), [m.nrows(), m.ncols()])).collect()
    }

    pub fn zeroed(&self) -> Self {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(|m| Array2::zeros(m.raw_dim())).collect(),
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }
}

/// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// for an affine layer's weight and bias.
pub fn init_affine(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> (Matrix, Matrix) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..bound));
    let b = Array2::from_shape_simple_fn((1, fan_out), || rng.gen_range(-bound..bound));
    (w, b)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian grid embedding of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    pub low: f64,
    pub high: f64,
    pub size: usize,
    pub tau: f64,
}

impl Default for RbfConfig {
    fn default() -> Self {
        RbfConfig::with_grid(0.0, 10.0, 64)
    }
}

impl RbfConfig {
    /// Grid on `[low, high]` with the width `tau = (high - low)^2 / 4`.
    pub fn with_grid(low: f64, high: f64, size: usize) -> Self {
        RbfConfig {
            low,
            high,
            size,
            tau: (high - low).powi(2) / 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !(self.high > self.low) || !(self.tau > 0.0) {
            return Err(Error::Config(format!("invalid RBF settings {self:?}")));
        }
        Ok(())
    }

    /// Embeds `x` after clipping it into `[low, high]`; infinite costs land
    /// on `high`.
    pub fn embed(&self, x: f64) -> Result<Vec<f64>> {
        if x.is_nan() {
            return Err(Error::NonFinite("rbf input".to_string()));
        }
        let clipped = x.clamp(self.low, self.high);
        rbf(clipped, self.low, self.high, self.size, self.tau)
    }
}

/// Component `i` is `exp(-(x - low - i * (high - low) / n)^2 / tau)` for
/// `0 <= i < n`.
pub fn rbf(x: f64, low: f64, high: f64, n: usize, tau: f64) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::NonFinite("rbf input".to_string()));
    }
    if n == 0 || !(high > low) || !(tau > 0.0) {
        return Err(Error::Config(format!("rbf needs n >= 1, high > low, tau > 0 (got n={n}, [{low}, {high}], tau={tau})")));
    }
    let step = (high - low) / n as f64;
    Ok((0..n).map(|i| (-(x - low - i as f64 * step).powi(2) / tau).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_closed_forms() {
        let v = rbf(0.0, 0.0, 10.0, 64, 25.0).unwrap();
        assert_eq!(v[0], 1.0);
        let v = rbf(5.0, 0.0, 10.0, 64, 25.0).unwrap();
        assert_eq!(v[32], 1.0);
        let v = rbf(1.0, 0.0, 10.0, 64, 25.0).unwrap();
        assert!((v[0] - 0.960_789_439_152_323_2).abs() < 1e-15);
        assert!((v[0] - (-1.0f64 / 25.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn rbf_components_in_unit_interval() {
        for x in [0.0, 0.3, 4.9, 10.0] {
            for c in rbf(x, 0.0, 10.0, 64, 25.0).unwrap() {
                assert!(c > 0.0 && c <= 1.0);
            }
        }
    }

    #[test]
    fn rbf_rejects_bad_input() {
        assert!(rbf(f64::NAN, 0.0, 10.0, 64, 25.0).is_err());
        assert!(rbf(f64::INFINITY, 0.0, 10.0, 64, 25.0).is_err());
        assert!(rbf(1.0, 0.0, 10.0, 0, 25.0).is_err());
        assert!(rbf(1.0, 10.0, 0.0, 4, 25.0).is_err());
    }

    #[test]
    fn default_grid_matches_published_setting() {
        let c = RbfConfig::default();
        assert_eq!((c.low, c.high, c.size, c.tau), (0.0, 10.0, 64, 25.0));
        assert_eq!(c.embed(f64::INFINITY).unwrap(), c.embed(10.0).unwrap());
        assert_eq!(c.embed(-3.0).unwrap(), c.embed(0.0).unwrap());
    }
}

//! Synthetic target distributions and the latent noise source.
//!
//! The workhorse is an isotropic Gaussian mixture; the ring of equally
//! weighted modes on a circle is a constructor over it. Labels produced by
//! the sampler exist for evaluation only and are never shown to a network.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("dimension error: {0}")]
    Dimension(String),
}

/// One isotropic Gaussian component: N(mean, variance * I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Per-coordinate variance (sigma squared), shared across coordinates.
    pub variance: f64,
    pub weight: f64,
}

/// A weighted isotropic Gaussian mixture in `dim` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub dim: usize,
    pub components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    pub fn new(dim: usize, components: Vec<MixtureComponent>) -> Result<MixtureSpec, DataError> {
        let spec = MixtureSpec { dim, components };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.dim == 0 {
            return Err(DataError::InvalidMixture("dimension must be positive".into()));
        }
        if self.components.is_empty() {
            return Err(DataError::InvalidMixture("no components".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.dim {
                return Err(DataError::InvalidMixture(format!(
                    "component {i} mean has dimension {}, expected {}",
                    c.mean.len(),
                    self.dim
                )));
            }
            if !(c.variance.is_finite() && c.variance > 0.0) {
                return Err(DataError::InvalidMixture(format!(
                    "component {i} variance {} is not positive",
                    c.variance
                )));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(DataError::InvalidMixture(format!(
                    "component {i} weight {} is not positive",
                    c.weight
                )));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DataError::InvalidMixture(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }
}

/// Latent noise: i.i.d. uniform on `[-1, 1]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub dim: usize,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.dim == 0 {
            return Err(DataError::InvalidNoise("dimension must be positive".into()));
        }
        Ok(())
    }
}

/// `count` equally weighted modes spaced on a circle in the plane:
/// component j sits at `(radius cos(2 pi j / count), radius sin(2 pi j / count))`.
pub fn ring_mixture(count: usize, radius: f64, variance: f64) -> Result<MixtureSpec, DataError> {
    if count == 0 {
        return Err(DataError::InvalidMixture("ring needs at least one mode".into()));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(DataError::InvalidMixture(format!("radius {radius} is negative")));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(DataError::InvalidMixture(format!(
            "variance {variance} is not positive"
        )));
    }
    let weight = 1.0 / count as f64;
    let components = (0..count)
        .map(|j| {
            let angle = 2.0 * PI * j as f64 / count as f64;
            MixtureComponent {
                mean: vec![radius * angle.cos(), radius * angle.sin()],
                variance,
                weight,
            }
        })
        .collect();
    // Weights are 1/count each; their sum can be off by strictly less than
    // the validation tolerance, so construct directly.
    let spec = MixtureSpec { dim: 2, components };
    spec.validate()?;
    Ok(spec)
}

/// Draw `batch` points. Returns the `[B x dim]` tensor and the component
/// index of every row; labels are for evaluation only.
pub fn sample_mixture(
    spec: &MixtureSpec,
    batch: usize,
    rng: &mut impl Rng,
) -> (Tensor, Vec<usize>) {
    assert!(batch >= 1, "empty batch");
    let mut data = Vec::with_capacity(batch * spec.dim);
    let mut labels = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut u: f64 = rng.random();
        let mut chosen = spec.components.len() - 1;
        for (j, c) in spec.components.iter().enumerate() {
            if u < c.weight {
                chosen = j;
                break;
            }
            u -= c.weight;
        }
        let c = &spec.components[chosen];
        let sigma = c.variance.sqrt();
        for &mu in &c.mean {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mu + sigma * z);
        }
        labels.push(chosen);
    }
    let tensor = Tensor::from_data(batch, spec.dim, data).expect("shape consistent by construction");
    (tensor, labels)
}

/// Draw a `[B x dim]` batch of latent noise.
pub fn sample_noise(spec: &NoiseSpec, batch: usize, rng: &mut impl Rng) -> Tensor {
    assert!(batch >= 1, "empty batch");
    let data: Vec<f64> = (0..batch * spec.dim)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Tensor::from_data(batch, spec.dim, data).expect("shape consistent by construction")
}

/// Exact mixture density at a point.
pub fn density(spec: &MixtureSpec, x: &[f64]) -> f64 {
    assert_eq!(x.len(), spec.dim, "point dimension mismatch");
    spec.components
        .iter()
        .map(|c| c.weight * gaussian_density(&c.mean, c.variance, x))
        .sum()
}

fn gaussian_density(mean: &[f64], variance: f64, x: &[f64]) -> f64 {
    let n = mean.len() as f64;
    let sq: f64 = mean.iter().zip(x).map(|(&m, &v)| (v - m) * (v - m)).sum();
    let norm = (2.0 * PI * variance).powf(n / 2.0);
    (-sq / (2.0 * variance)).exp() / norm
}

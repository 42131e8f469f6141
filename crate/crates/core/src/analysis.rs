//! Gradient-weighting analysis against the limiting discriminator.
//!
//! For 1-D mixtures the optimal discriminator `D*(x) = p(x) / (p(x) + q(x))`
//! is available in closed form, along with its derivative. The quantity of
//! interest is the per-point weighting term `D*'(x) / D*(x)` that multiplies
//! a generated point's gradient under pointwise training: it collapses to
//! zero around modes the generator is missing, which is the mechanism this
//! module measures. The sign convention follows the ascent objective
//! `log D*`; descent flips it.
//!
//! [`batch_gradient_decomposition`] performs the companion empirical study:
//! it splits a minibatch gradient into per-point contributions — weighted
//! individually for the pointwise loss, and by one shared confidence factor
//! for the sample classifier — and checks the pieces against autodiff.

use thiserror::Error;

use crate::adversaries::{GeneratorNet, PointwiseDiscriminator, SampleClassifier, HEAD_CLAMP};
use crate::data::{density, MixtureComponent, MixtureSpec};
use crate::nn::NnError;
use crate::tensor::{Tensor, TensorError};

/// Densities below this are treated as numerically absent.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("analysis requires one-dimensional mixtures, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("grid must be sorted and non-empty")]
    BadGrid,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// `p / (p + q)` with a degenerate flag when both densities sit below
/// [`DENSITY_FLOOR`]; scaling both inputs by a common factor leaves the
/// value unchanged, so unnormalized densities are fine.
pub fn d_star_from_densities(p: f64, q: f64) -> (f64, bool) {
    if p < DENSITY_FLOOR && q < DENSITY_FLOOR {
        (0.5, true)
    } else {
        (p / (p + q), false)
    }
}

/// The limiting discriminator for fixed generator: `P_x / (P_x + P_G)`.
pub fn optimal_discriminator(px: &MixtureSpec, pg: &MixtureSpec, x: f64) -> f64 {
    d_star_from_densities(density(px, &[x]), density(pg, &[x])).0
}

fn density_prime_1d(spec: &MixtureSpec, x: f64) -> f64 {
    spec.components
        .iter()
        .map(|c| {
            let mu = c.mean[0];
            let var = c.variance;
            let n = (-(x - mu) * (x - mu) / (2.0 * var)).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt();
            c.weight * n * (-(x - mu) / var)
        })
        .sum()
}

/// Point-by-point closed forms over a 1-D grid.
#[derive(Debug, Clone)]
pub struct WeightingCurve {
    pub grid: Vec<f64>,
    pub p_x: Vec<f64>,
    pub p_g: Vec<f64>,
    pub d_star: Vec<f64>,
    pub d_star_prime: Vec<f64>,
    /// The relative-slope weighting term `D*'(x) / D*(x)`.
    pub weight: Vec<f64>,
}

impl WeightingCurve {
    pub fn csv_header() -> &'static str {
        "x,p_x,p_g,d_star,d_star_prime,weight"
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.grid.len()).map(move |i| {
            format!(
                "{},{},{},{},{},{}",
                self.grid[i],
                self.p_x[i],
                self.p_g[i],
                self.d_star[i],
                self.d_star_prime[i],
                self.weight[i]
            )
        })
    }
}

/// Evaluate densities, `D*`, its analytic derivative and the weighting term
/// over a sorted grid. Both specs must be one-dimensional.
pub fn weighting_curve(
    px: &MixtureSpec,
    pg: &MixtureSpec,
    grid: &[f64],
) -> Result<WeightingCurve, AnalysisError> {
    if px.dim != 1 {
        return Err(AnalysisError::NotOneDimensional(px.dim));
    }
    if pg.dim != 1 {
        return Err(AnalysisError::NotOneDimensional(pg.dim));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadGrid);
    }
    let mut curve = WeightingCurve {
        grid: grid.to_vec(),
        p_x: Vec::with_capacity(grid.len()),
        p_g: Vec::with_capacity(grid.len()),
        d_star: Vec::with_capacity(grid.len()),
        d_star_prime: Vec::with_capacity(grid.len()),
        weight: Vec::with_capacity(grid.len()),
    };
    for &x in grid {
        let p = density(px, &[x]);
        let q = density(pg, &[x]);
        let (d, degenerate) = d_star_from_densities(p, q);
        let (d_prime, w) = if degenerate {
            (0.0, 0.0)
        } else {
            let p_prime = density_prime_1d(px, x);
            let q_prime = density_prime_1d(pg, x);
            let denom = p + q;
            let d_prime = (p_prime * q - p * q_prime) / (denom * denom);
            // weight = D*'/D* = (p' q - p q') / (p (p + q)), kept finite by
            // flooring the vanishing density.
            let w = (p_prime * q - p * q_prime) / (p.max(DENSITY_FLOOR) * denom);
            (d_prime, w)
        };
        curve.p_x.push(p);
        curve.p_g.push(q);
        curve.d_star.push(d);
        curve.d_star_prime.push(d_prime);
        curve.weight.push(w);
    }
    Ok(curve)
}

/// The mode-collapse study configuration: a bimodal target with the
/// generator concentrated on one mode.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollapseStudy {
    /// Mode the generator currently covers.
    pub covered_mean: f64,
    /// Mode the generator is missing.
    pub missing_mean: f64,
    pub sigma: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
}

impl Default for CollapseStudy {
    fn default() -> Self {
        CollapseStudy {
            covered_mean: -2.0,
            missing_mean: 2.0,
            sigma: 0.25,
            grid_lo: -4.0,
            grid_hi: 4.0,
            grid_points: 1601,
        }
    }
}

/// Per-region maxima of `|weight|` and their ratio. The approach region
/// runs from three sigma left of the covered mode to the midpoint between
/// the modes; the missing region is the three-sigma band around the
/// missing mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMaxima {
    pub approach_max: f64,
    pub missing_max: f64,
    /// `missing_max / approach_max`.
    pub ratio: f64,
}

impl CollapseStudy {
    pub fn data_mixture(&self) -> MixtureSpec {
        MixtureSpec::new(
            1,
            vec![
                MixtureComponent {
                    mean: vec![self.covered_mean],
                    variance: self.sigma * self.sigma,
                    weight: 0.5,
                },
                MixtureComponent {
                    mean: vec![self.missing_mean],
                    variance: self.sigma * self.sigma,
                    weight: 0.5,
                },
            ],
        )
        .expect("well-formed by construction")
    }

    pub fn generator_mixture(&self) -> MixtureSpec {
        MixtureSpec::new(
            1,
            vec![MixtureComponent {
                mean: vec![self.covered_mean],
                variance: self.sigma * self.sigma,
                weight: 1.0,
            }],
        )
        .expect("well-formed by construction")
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        let step = (self.grid_hi - self.grid_lo) / (n - 1) as f64;
        (0..n).map(|i| self.grid_lo + i as f64 * step).collect()
    }

    pub fn curve(&self) -> Result<WeightingCurve, AnalysisError> {
        weighting_curve(&self.data_mixture(), &self.generator_mixture(), &self.grid())
    }

    /// Largest `|weight|` inside each region of interest.
    pub fn region_maxima(&self, curve: &WeightingCurve) -> RegionMaxima {
        let missing_lo = self.missing_mean - 3.0 * self.sigma;
        let missing_hi = self.missing_mean + 3.0 * self.sigma;
        let approach_lo = self.covered_mean - 3.0 * self.sigma;
        let approach_hi = (self.covered_mean + self.missing_mean) / 2.0;

        let max_in = |lo: f64, hi: f64| {
            curve
                .grid
                .iter()
                .zip(&curve.weight)
                .filter(|(&x, _)| x >= lo && x <= hi)
                .map(|(_, &w)| w.abs())
                .fold(0.0f64, f64::max)
        };
        let approach_max = max_in(approach_lo, approach_hi);
        let missing_max = max_in(missing_lo, missing_hi);
        RegionMaxima {
            approach_max,
            missing_max,
            ratio: missing_max / approach_max,
        }
    }
}

/// Which loss the minibatch decomposition targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionMode {
    /// `(1/B) sum_i log D(G(z_i))`: separable per-point weights.
    Pointwise,
    /// `log psi(eta(G(Z)))`: one shared confidence factor for the batch.
    SampleClassifier,
}

/// The adversary the generated batch is decomposed against.
pub enum DecompositionTarget<'a> {
    Pointwise(&'a PointwiseDiscriminator),
    SampleClassifier(&'a SampleClassifier),
}

/// Per-point structure of one minibatch gradient.
#[derive(Debug)]
pub struct GradientDecomposition {
    /// Sample-classifier mode only: `(1/psi(eta_B)) grad psi(eta_B)`, the
    /// confidence factor shared by every point in the batch.
    pub shared_factor: Option<Vec<f64>>,
    /// Data-space cotangent received by each generated point. In pointwise
    /// mode this is the per-point relative slope `(1/D) grad D(x_i)`; in
    /// sample-classifier mode it is the shared factor pulled back through
    /// the encoder trunk at `x_i`.
    pub per_point_weights: Vec<Vec<f64>>,
    /// Flat generator-parameter contribution of each point; the total
    /// gradient is the mean of these.
    pub per_point_theta: Vec<Vec<f64>>,
    /// Mean of `per_point_theta`.
    pub reconstructed: Vec<f64>,
    /// The same gradient from one ordinary backward pass over the full
    /// batch loss, for comparison.
    pub autodiff: Vec<f64>,
}

/// Split the generator gradient of a minibatch into per-point pieces and
/// reconstruct it. `noise` is `[B x m]`.
pub fn batch_gradient_decomposition(
    generator: &GeneratorNet,
    target: DecompositionTarget<'_>,
    noise: &Tensor,
) -> Result<GradientDecomposition, AnalysisError> {
    let b = noise.rows();
    let g_store = generator.param_store();
    let adv_store = match &target {
        DecompositionTarget::Pointwise(d) => d.param_store(),
        DecompositionTarget::SampleClassifier(sc) => sc.param_store(),
    };
    adv_store.set_trainable(false);

    // Reference gradient from one whole-batch backward pass.
    g_store.zero_grads();
    let fake = generator.generate(noise)?;
    let loss = match &target {
        DecompositionTarget::Pointwise(d) => d.predict(&fake)?.log().mean_rows()?,
        DecompositionTarget::SampleClassifier(sc) => sc.predict_tensor(&fake)?.log(),
    };
    loss.backward()?;
    let autodiff = g_store.flat_grads();
    g_store.zero_grads();

    let fake_rows = fake.detach();
    let dim = fake_rows.cols();
    let noise_data = noise.to_vec();
    let m = noise.cols();

    // Shared confidence factor at the batch encoding (sample classifier).
    let shared_factor = match &target {
        DecompositionTarget::Pointwise(_) => None,
        DecompositionTarget::SampleClassifier(sc) => {
            let eta = sc.encoder.encode(&fake_rows)?.detach();
            eta.set_requires_grad(true);
            sc.head
                .forward(&eta)?
                .clamp(HEAD_CLAMP, 1.0 - HEAD_CLAMP)
                .log()
                .backward()?;
            Some(eta.grad().expect("encoding participates in the loss"))
        }
    };

    let mut per_point_weights = Vec::with_capacity(b);
    let mut per_point_theta = Vec::with_capacity(b);
    let fake_data = fake_rows.to_vec();
    for i in 0..b {
        // Data-space cotangent at x_i.
        let x = Tensor::from_data(1, dim, fake_data[i * dim..(i + 1) * dim].to_vec())?;
        x.set_requires_grad(true);
        match &target {
            DecompositionTarget::Pointwise(d) => {
                d.predict(&x)?.log().backward()?;
            }
            DecompositionTarget::SampleClassifier(sc) => {
                let features = sc.encoder.phi.forward(&x)?;
                let cot = Tensor::from_data(
                    1,
                    features.cols(),
                    shared_factor.clone().expect("set in this mode"),
                )?;
                features.mul(&cot)?.sum().backward()?;
            }
        }
        let weight_i = x.grad().expect("x participates in the loss");

        // Pull that cotangent back through the generator at z_i.
        g_store.zero_grads();
        let z = Tensor::from_data(1, m, noise_data[i * m..(i + 1) * m].to_vec())?;
        let gz = generator.generate(&z)?;
        let cot = Tensor::from_data(1, dim, weight_i.clone())?;
        gz.mul(&cot)?.sum().backward()?;
        per_point_theta.push(g_store.flat_grads());
        per_point_weights.push(weight_i);
    }
    g_store.zero_grads();
    adv_store.set_trainable(true);

    let theta_len = autodiff.len();
    let mut reconstructed = vec![0.0; theta_len];
    for contribution in &per_point_theta {
        for (r, &c) in reconstructed.iter_mut().zip(contribution) {
            *r += c;
        }
    }
    for r in reconstructed.iter_mut() {
        *r /= b as f64;
    }

    Ok(GradientDecomposition {
        shared_factor,
        per_point_weights,
        per_point_theta,
        reconstructed,
        autodiff,
    })
}

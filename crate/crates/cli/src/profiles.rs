//! Built-in experiment profiles.
//!
//! The three `gauss8-*` profiles pin the eight-Gaussian ring task: modes on
//! a circle of radius 2 with variance 0.01, latent noise uniform on
//! `[-1,1]^256`, a 3x128 relu generator, a 3x32 relu discriminator, the
//! distributional adversary as a 2x32 trunk with mean pooling and a 1x32
//! head, Adam at lr 1e-4 with beta1 0.5, minibatch 512, 25000 iterations,
//! alternating every iteration. The DAN profiles train with the
//! distributional term alone (lambda1 = 0, lambda2 = 1).
//!
//! `bimodal-1d` is the 1-D gradient-weighting study: a bimodal target with
//! the generator's distribution sitting on one mode.

use dan_core::analysis::CollapseStudy;
use dan_core::data::{MixtureComponent, MixtureSpec, NoiseSpec};
use dan_core::nn::Activation;
use dan_core::training::{GeneratorLossForm, Mode, NetworkDims, TrainConfig};
use dan_core::adversaries::TwoSampleLossForm;

use crate::config::{DataSection, EvalSection, ExperimentConfig, RingSpec, SCHEMA_VERSION};

pub fn names() -> &'static [&'static str] {
    &["gauss8-gan", "gauss8-dan-s", "gauss8-dan-2s", "bimodal-1d"]
}

/// Look up a profile by name.
pub fn builtin(name: &str) -> Option<ExperimentConfig> {
    match name {
        "gauss8-gan" => Some(gauss8(Mode::GanOnly, 1.0, 0.0)),
        "gauss8-dan-s" => Some(gauss8(Mode::SampleClassifier, 0.0, 1.0)),
        "gauss8-dan-2s" => Some(gauss8(Mode::TwoSample, 0.0, 1.0)),
        "bimodal-1d" => Some(bimodal_1d()),
        _ => None,
    }
}

fn gauss8(mode: Mode, lambda1: f64, lambda2: f64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        train: TrainConfig {
            iterations: 25_000,
            batch_size: 512,
            adversary_period: 1,
            mode,
            lambda1,
            lambda2,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            g_loss_form: GeneratorLossForm::NonSaturating,
            two_sample_loss_form: TwoSampleLossForm::CrossEntropy,
            seed: 1,
            snapshot_every: 2_500,
        },
        data: DataSection {
            ring: Some(RingSpec {
                modes: 8,
                radius: 2.0,
                variance: 0.01,
            }),
            mixture: None,
        },
        noise: NoiseSpec { dim: 256 },
        networks: NetworkDims {
            generator: vec![256, 128, 128, 128, 2],
            discriminator: vec![2, 32, 32, 32, 1],
            encoder: vec![2, 32, 32],
            head: vec![32, 32, 1],
            generator_out: Activation::Identity,
        },
        eval: EvalSection::default(),
        analysis: None,
    }
}

fn bimodal_1d() -> ExperimentConfig {
    let study = CollapseStudy::default();
    let variance = study.sigma * study.sigma;
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        train: TrainConfig {
            iterations: 2_000,
            batch_size: 128,
            adversary_period: 1,
            mode: Mode::SampleClassifier,
            lambda1: 0.0,
            lambda2: 1.0,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            g_loss_form: GeneratorLossForm::NonSaturating,
            two_sample_loss_form: TwoSampleLossForm::CrossEntropy,
            seed: 1,
            snapshot_every: 500,
        },
        data: DataSection {
            ring: None,
            mixture: Some(
                MixtureSpec::new(
                    1,
                    vec![
                        MixtureComponent {
                            mean: vec![study.covered_mean],
                            variance,
                            weight: 0.5,
                        },
                        MixtureComponent {
                            mean: vec![study.missing_mean],
                            variance,
                            weight: 0.5,
                        },
                    ],
                )
                .expect("well-formed by construction"),
            ),
        },
        noise: NoiseSpec { dim: 16 },
        networks: NetworkDims {
            generator: vec![16, 32, 32, 1],
            discriminator: vec![1, 32, 1],
            encoder: vec![1, 32, 32],
            head: vec![32, 32, 1],
            generator_out: Activation::Identity,
        },
        eval: EvalSection {
            n_samples: 10_000,
            ..EvalSection::default()
        },
        analysis: Some(study),
    }
}

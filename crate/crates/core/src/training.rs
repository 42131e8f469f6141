//! The alternating training loop.
//!
//! One iteration runs up to three phases, each on freshly drawn minibatches:
//!
//! 1. ascend the pointwise discriminator on its loss, weighted by
//!    `lambda1` (skipped when `lambda1 = 0`);
//! 2. every `adversary_period` iterations, ascend the distributional
//!    adversary, weighted by `lambda2` (skipped when `lambda2 = 0`). The
//!    two-sample adversary splits its real and generated batches into
//!    halves and trains on the four pairs (X1,X2) and (G(Z1),G(Z2)) toward
//!    "same", (X1,G(Z2)) and (G(Z1),X2) toward "different", each at weight
//!    `lambda2 / 2`;
//! 3. descend the generator on its `lambda1`-weighted pointwise term plus
//!    the `lambda2`-weighted distributional term (for the two-sample mode,
//!    the two mixed pairs driven toward "same").
//!
//! Exactly one Adam step runs per phase per iteration. Generated batches
//! are detached during adversary phases, and adversary parameters are
//! frozen during the generator phase, so each phase updates only its own
//! network. Zero-weighted phases are skipped entirely — they draw no
//! samples — which makes a run with `lambda2 = 0` bitwise identical to the
//! plain GAN loop at the same seed.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversaries::{
    GeneratorNet, PointwiseDiscriminator, SampleClassifier, TwoSampleDiscriminator,
    TwoSampleLossForm,
};
use crate::data::{sample_mixture, sample_noise, DataError, MixtureSpec, NoiseSpec};
use crate::nn::{
    adam_step, write_checkpoint, Activation, AdamState, CheckpointMeta, MlpNet, NnError,
    ParamStore,
};
use crate::rng::{stream, Stream};
use crate::tensor::{Tensor, TensorError};

/// Which adversary drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Pointwise discriminator only.
    #[serde(rename = "gan")]
    GanOnly,
    /// Sample classifier over the deep mean encoding.
    #[serde(rename = "s")]
    SampleClassifier,
    /// Two-sample discriminator over encoding differences.
    #[serde(rename = "2s")]
    TwoSample,
}

/// Form of the generator's pointwise term. Both descend; they differ in
/// where they saturate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLossForm {
    /// `(1/B) sum log(1 - D(G(z)))`, the minimax form.
    Saturating,
    /// `-(1/B) sum log D(G(z))`, the form that keeps gradients alive while
    /// the discriminator is confident.
    NonSaturating,
}

/// Every knob of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Total iterations T.
    pub iterations: usize,
    /// Minibatch size B.
    pub batch_size: usize,
    /// Adversary update period k: phase 2 runs when `iter % k == 0`.
    pub adversary_period: usize,
    pub mode: Mode,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub g_loss_form: GeneratorLossForm,
    pub two_sample_loss_form: TwoSampleLossForm,
    pub seed: u64,
    pub snapshot_every: usize,
}

impl TrainConfig {
    /// Every violated constraint, empty when the config is sound.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.iterations < 1 {
            v.push("iterations must be at least 1".into());
        }
        if self.batch_size < 1 {
            v.push("batch_size must be at least 1".into());
        }
        if self.mode == Mode::TwoSample && !self.batch_size.is_multiple_of(2) {
            v.push(format!(
                "batch_size must be even in two-sample mode to split into halves, got {}",
                self.batch_size
            ));
        }
        if self.adversary_period < 1 {
            v.push("adversary_period must be at least 1".into());
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            v.push("lambda weights must be non-negative".into());
        }
        if self.lambda1 + self.lambda2 <= 0.0 {
            v.push("lambda1 + lambda2 must be positive".into());
        }
        if self.mode == Mode::GanOnly && self.lambda1 <= 0.0 {
            v.push("gan mode requires lambda1 > 0".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            v.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.beta1 >= 0.0 && self.beta1 < 1.0) {
            v.push(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(self.beta2 >= 0.0 && self.beta2 < 1.0) {
            v.push(format!("beta2 must lie in [0, 1), got {}", self.beta2));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            v.push(format!("eps must be positive, got {}", self.eps));
        }
        if self.snapshot_every < 1 {
            v.push("snapshot_every must be at least 1".into());
        }
        v
    }
}

/// Layer widths for every network of a run, plus the generator's output
/// activation (identity for unbounded data spaces, tanh for bounded ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDims {
    pub generator: Vec<usize>,
    pub discriminator: Vec<usize>,
    /// The per-point encoder trunk; its last width is the encoding size.
    pub encoder: Vec<usize>,
    /// The classifier head applied after the mean.
    pub head: Vec<usize>,
    pub generator_out: Activation,
}

impl NetworkDims {
    pub fn violations(&self, noise_dim: usize, data_dim: usize) -> Vec<String> {
        let mut v = Vec::new();
        let chain = |v: &mut Vec<String>, name: &str, dims: &[usize]| {
            if dims.len() < 2 {
                v.push(format!("{name} needs at least two extents, got {dims:?}"));
            }
            if dims.contains(&0) {
                v.push(format!("{name} has a zero extent: {dims:?}"));
            }
        };
        chain(&mut v, "generator dims", &self.generator);
        chain(&mut v, "discriminator dims", &self.discriminator);
        chain(&mut v, "encoder dims", &self.encoder);
        chain(&mut v, "head dims", &self.head);
        if self.generator.first() != Some(&noise_dim) {
            v.push(format!(
                "generator input {:?} must match noise dimension {noise_dim}",
                self.generator.first()
            ));
        }
        if self.generator.last() != Some(&data_dim) {
            v.push(format!(
                "generator output {:?} must match data dimension {data_dim}",
                self.generator.last()
            ));
        }
        if self.discriminator.first() != Some(&data_dim) {
            v.push("discriminator input must match data dimension".into());
        }
        if self.discriminator.last() != Some(&1) {
            v.push("discriminator must end in one unit".into());
        }
        if self.encoder.first() != Some(&data_dim) {
            v.push("encoder input must match data dimension".into());
        }
        if self.head.first() != self.encoder.last() {
            v.push(format!(
                "head input {:?} must match encoder output {:?}",
                self.head.first(),
                self.encoder.last()
            ));
        }
        if self.head.last() != Some(&1) {
            v.push("head must end in one unit".into());
        }
        v
    }
}

/// Per-iteration loss record. `loss_d` and `loss_m` hold the raw ascent
/// objectives of their adversaries (unweighted), present only when the
/// phase ran; `loss_g` is the weighted objective the generator descended.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss_d: Option<f64>,
    pub loss_m: Option<f64>,
    pub loss_g: f64,
}

/// Loss history of one run, one record per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    pub g_loss_form: GeneratorLossForm,
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn csv_header() -> &'static str {
        "iteration,loss_d,loss_m,loss_g"
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.records.iter().map(|r| {
            let d = r.loss_d.map_or(String::new(), |v| format!("{v}"));
            let m = r.loss_m.map_or(String::new(), |v| format!("{v}"));
            format!("{},{d},{m},{}", r.iteration, r.loss_g)
        })
    }
}

/// Generator checkpoint taken during the run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iteration: usize,
    pub bytes: Vec<u8>,
}

/// Partial results preserved when a run aborts.
#[derive(Debug)]
pub struct TrainAbort {
    pub iteration: usize,
    pub reason: String,
    pub trace: LossTrace,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("non-finite {term} ({value}) at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        term: String,
        value: f64,
    },
    #[error("training aborted at iteration {}: {}", .0.iteration, .0.reason)]
    Aborted(Box<TrainAbort>),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The distributional adversary of a run, if the mode has one.
pub enum Adversary {
    None,
    Sample {
        model: SampleClassifier,
        store: ParamStore,
        adam: AdamState,
    },
    TwoSample {
        model: TwoSampleDiscriminator,
        store: ParamStore,
        adam: AdamState,
    },
}

impl Adversary {
    pub fn store(&self) -> Option<&ParamStore> {
        match self {
            Adversary::None => None,
            Adversary::Sample { store, .. } | Adversary::TwoSample { store, .. } => Some(store),
        }
    }
}

/// All mutable state of one training run.
pub struct TrainState {
    pub generator: GeneratorNet,
    pub discriminator: PointwiseDiscriminator,
    pub adversary: Adversary,
    g_store: ParamStore,
    g_adam: AdamState,
    d_store: ParamStore,
    d_adam: AdamState,
    data_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    iteration: usize,
}

impl TrainState {
    /// Initialize every network and optimizer from the config's seed. Each
    /// network draws from its own stream, so e.g. the generator comes out
    /// identical whether or not an adversary exists.
    pub fn init(cfg: &TrainConfig, dims: &NetworkDims) -> Result<TrainState, TrainError> {
        let mut g_rng = stream(cfg.seed, Stream::GeneratorInit);
        let generator = GeneratorNet::new(MlpNet::init_with_rng(
            &dims.generator,
            Activation::Relu,
            dims.generator_out,
            &mut g_rng,
        )?);
        let mut d_rng = stream(cfg.seed, Stream::DiscriminatorInit);
        let discriminator = PointwiseDiscriminator::new(MlpNet::init_with_rng(
            &dims.discriminator,
            Activation::Relu,
            Activation::Sigmoid,
            &mut d_rng,
        )?)?;
        let mut adv_rng = stream(cfg.seed, Stream::AdversaryInit);
        let adversary = match cfg.mode {
            Mode::GanOnly => Adversary::None,
            Mode::SampleClassifier => {
                let model = SampleClassifier::init_with_rng(&dims.encoder, &dims.head, &mut adv_rng)?;
                let store = model.param_store();
                let adam = AdamState::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, &store);
                Adversary::Sample { model, store, adam }
            }
            Mode::TwoSample => {
                let model =
                    TwoSampleDiscriminator::init_with_rng(&dims.encoder, &dims.head, &mut adv_rng)?;
                let store = model.param_store();
                let adam = AdamState::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, &store);
                Adversary::TwoSample { model, store, adam }
            }
        };
        let g_store = generator.param_store();
        let g_adam = AdamState::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, &g_store);
        let d_store = discriminator.param_store();
        let d_adam = AdamState::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, &d_store);
        Ok(TrainState {
            generator,
            discriminator,
            adversary,
            g_store,
            g_adam,
            d_store,
            d_adam,
            data_rng: stream(cfg.seed, Stream::Data),
            noise_rng: stream(cfg.seed, Stream::Noise),
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn generator_store(&self) -> &ParamStore {
        &self.g_store
    }

    pub fn discriminator_store(&self) -> &ParamStore {
        &self.d_store
    }

    pub fn adversary_store(&self) -> Option<&ParamStore> {
        self.adversary.store()
    }

    /// Copies of the sampling streams, for replaying draws outside the loop.
    pub fn clone_rngs(&self) -> (ChaCha8Rng, ChaCha8Rng) {
        (self.data_rng.clone(), self.noise_rng.clone())
    }

    pub fn generator_checkpoint(&self, seed: u64) -> Vec<u8> {
        write_checkpoint(
            &self.g_store,
            &CheckpointMeta {
                seed,
                network: "generator".into(),
            },
        )
    }

    fn all_params_finite(&self) -> bool {
        self.g_store.all_finite()
            && self.d_store.all_finite()
            && self.adversary.store().is_none_or(|s| s.all_finite())
    }
}

fn ensure_finite(value: f64, term: &str, iteration: usize) -> Result<(), TrainError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite {
            iteration,
            term: term.into(),
            value,
        })
    }
}

/// The generator's pointwise term, in the form it descends.
pub fn g_pointwise_term(
    d: &PointwiseDiscriminator,
    fake: &Tensor,
    form: GeneratorLossForm,
) -> Result<Tensor, NnError> {
    let p = d.predict(fake)?;
    Ok(match form {
        GeneratorLossForm::Saturating => p.sub_from_scalar(1.0).log().mean_rows()?,
        GeneratorLossForm::NonSaturating => p.log().mean_rows()?.neg(),
    })
}

/// The generator's sample-classifier term: descend
/// `log(1 - psi(eta(G(Z))))`.
pub fn g_sample_term(sc: &SampleClassifier, fake: &Tensor) -> Result<Tensor, NnError> {
    Ok(sc.predict_tensor(fake)?.sub_from_scalar(1.0).log())
}

/// The generator's two-sample term over the mixed pairs, driven toward
/// "same": cross-entropy descends `-(log p1 + log p2)`, verbatim descends
/// `(1 - log p1) + (1 - log p2)` — identical gradients, shifted value.
pub fn g_two_sample_term(
    ts: &TwoSampleDiscriminator,
    x1: &Tensor,
    x2: &Tensor,
    fake1: &Tensor,
    fake2: &Tensor,
    form: TwoSampleLossForm,
) -> Result<Tensor, NnError> {
    let p1 = ts.predict_tensor(x1, fake2)?.log();
    let p2 = ts.predict_tensor(fake1, x2)?.log();
    Ok(match form {
        TwoSampleLossForm::CrossEntropy => p1.add(&p2)?.neg(),
        TwoSampleLossForm::Verbatim => p1.sub_from_scalar(1.0).add(&p2.sub_from_scalar(1.0))?,
    })
}

fn split_half(t: &Tensor) -> Result<(Tensor, Tensor), TensorError> {
    let half = t.rows() / 2;
    Ok((t.slice_rows(0, half)?, t.slice_rows(half, t.rows())?))
}

/// Phase 1: one ascent step of the pointwise discriminator. Returns its
/// raw loss. Call only when `lambda1 > 0`.
pub fn discriminator_phase(
    state: &mut TrainState,
    cfg: &TrainConfig,
    mixture: &MixtureSpec,
    noise: &NoiseSpec,
) -> Result<f64, TrainError> {
    let iteration = state.iteration + 1;
    let (x, _) = sample_mixture(mixture, cfg.batch_size, &mut state.data_rng);
    let z = sample_noise(noise, cfg.batch_size, &mut state.noise_rng);
    let fake = state.generator.generate(&z)?.detach();
    state.d_store.zero_grads();
    let value = state.discriminator.loss(&x, &fake)?;
    let v = value.item();
    ensure_finite(v, "discriminator loss", iteration)?;
    value.mul_scalar(-cfg.lambda1).backward()?;
    adam_step(&state.d_store, &mut state.d_adam)?;
    Ok(v)
}

/// Phase 2: one ascent step of the distributional adversary. Returns its
/// raw loss (for the two-sample adversary, the sum over the four pairs).
/// Call only when `lambda2 > 0` and the mode has an adversary.
pub fn adversary_phase(
    state: &mut TrainState,
    cfg: &TrainConfig,
    mixture: &MixtureSpec,
    noise: &NoiseSpec,
) -> Result<f64, TrainError> {
    let iteration = state.iteration + 1;
    let (x, _) = sample_mixture(mixture, cfg.batch_size, &mut state.data_rng);
    let z = sample_noise(noise, cfg.batch_size, &mut state.noise_rng);
    let fake = state.generator.generate(&z)?.detach();
    match &mut state.adversary {
        Adversary::None => unreachable!("adversary_phase called in gan-only mode"),
        Adversary::Sample { model, store, adam } => {
            store.zero_grads();
            let value = model.loss(&x, &fake)?;
            let v = value.item();
            ensure_finite(v, "sample classifier loss", iteration)?;
            value.mul_scalar(-cfg.lambda2).backward()?;
            adam_step(store, adam)?;
            Ok(v)
        }
        Adversary::TwoSample { model, store, adam } => {
            let (x1, x2) = split_half(&x)?;
            let (f1, f2) = split_half(&fake)?;
            store.zero_grads();
            let form = cfg.two_sample_loss_form;
            let value = model
                .loss(&x1, &x2, true, form)?
                .add(&model.loss(&f1, &f2, true, form)?)?
                .add(&model.loss(&x1, &f2, false, form)?)?
                .add(&model.loss(&f1, &x2, false, form)?)?;
            let v = value.item();
            ensure_finite(v, "two-sample loss", iteration)?;
            value.mul_scalar(-cfg.lambda2 / 2.0).backward()?;
            adam_step(store, adam)?;
            Ok(v)
        }
    }
}

/// Phase 3: one descent step of the generator. Returns the weighted
/// objective it descended.
pub fn generator_phase(
    state: &mut TrainState,
    cfg: &TrainConfig,
    mixture: &MixtureSpec,
    noise: &NoiseSpec,
) -> Result<f64, TrainError> {
    let iteration = state.iteration + 1;
    let needs_real = cfg.lambda2 > 0.0 && matches!(state.adversary, Adversary::TwoSample { .. });
    let x = if needs_real {
        Some(sample_mixture(mixture, cfg.batch_size, &mut state.data_rng).0)
    } else {
        None
    };
    let z = sample_noise(noise, cfg.batch_size, &mut state.noise_rng);

    state.g_store.zero_grads();
    state.d_store.set_trainable(false);
    if let Some(store) = state.adversary.store() {
        store.set_trainable(false);
    }
    let result = (|| -> Result<f64, TrainError> {
        let fake = state.generator.generate(&z)?;
        let mut total: Option<Tensor> = None;
        let mut accumulate = |t: Tensor| -> Result<(), TensorError> {
            total = Some(match total.take() {
                Some(acc) => acc.add(&t)?,
                None => t,
            });
            Ok(())
        };
        if cfg.lambda1 > 0.0 {
            let term = g_pointwise_term(&state.discriminator, &fake, cfg.g_loss_form)?;
            accumulate(term.mul_scalar(cfg.lambda1))?;
        }
        if cfg.lambda2 > 0.0 {
            match &state.adversary {
                Adversary::None => {}
                Adversary::Sample { model, .. } => {
                    let term = g_sample_term(model, &fake)?;
                    accumulate(term.mul_scalar(cfg.lambda2))?;
                }
                Adversary::TwoSample { model, .. } => {
                    let real = x.as_ref().expect("sampled above for two-sample mode");
                    let (x1, x2) = split_half(real)?;
                    let (f1, f2) = split_half(&fake)?;
                    let term =
                        g_two_sample_term(model, &x1, &x2, &f1, &f2, cfg.two_sample_loss_form)?;
                    accumulate(term.mul_scalar(cfg.lambda2))?;
                }
            }
        }
        let total = total.expect("validated configs give the generator at least one term");
        let v = total.item();
        ensure_finite(v, "generator loss", iteration)?;
        total.backward()?;
        adam_step(&state.g_store, &mut state.g_adam)?;
        Ok(v)
    })();
    state.d_store.set_trainable(true);
    if let Some(store) = state.adversary.store() {
        store.set_trainable(true);
    }
    result
}

/// One full iteration of the alternating scheme. Advances the iteration
/// counter only when every phase succeeds.
pub fn train_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    mixture: &MixtureSpec,
    noise: &NoiseSpec,
) -> Result<LossRecord, TrainError> {
    let iteration = state.iteration + 1;
    let loss_d = if cfg.lambda1 > 0.0 {
        Some(discriminator_phase(state, cfg, mixture, noise)?)
    } else {
        None
    };
    let adversary_due = cfg.lambda2 > 0.0
        && !matches!(state.adversary, Adversary::None)
        && iteration.is_multiple_of(cfg.adversary_period);
    let loss_m = if adversary_due {
        Some(adversary_phase(state, cfg, mixture, noise)?)
    } else {
        None
    };
    let loss_g = generator_phase(state, cfg, mixture, noise)?;
    if !state.all_params_finite() {
        return Err(TrainError::NonFinite {
            iteration,
            term: "parameter".into(),
            value: f64::NAN,
        });
    }
    state.iteration = iteration;
    Ok(LossRecord {
        iteration,
        loss_d,
        loss_m,
        loss_g,
    })
}

/// Everything a completed run produces.
pub struct TrainRun {
    pub state: TrainState,
    pub trace: LossTrace,
    pub snapshots: Vec<Snapshot>,
}

impl std::fmt::Debug for TrainRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainRun")
            .field("iterations", &self.trace.records.len())
            .field("snapshots", &self.snapshots.len())
            .finish_non_exhaustive()
    }
}

/// Run `cfg.iterations` steps against the target mixture. Snapshots of the
/// generator are taken after initialization, every `snapshot_every`
/// iterations, and at the end. Fully deterministic for a given seed. On
/// abort, the partial trace and snapshots ride along with the error.
pub fn run_training(
    cfg: &TrainConfig,
    dims: &NetworkDims,
    mixture: &MixtureSpec,
    noise: &NoiseSpec,
) -> Result<TrainRun, TrainError> {
    let mut violations = cfg.violations();
    violations.extend(dims.violations(noise.dim, mixture.dim));
    if let Err(e) = mixture.validate() {
        violations.push(e.to_string());
    }
    if let Err(e) = noise.validate() {
        violations.push(e.to_string());
    }
    if !violations.is_empty() {
        return Err(TrainError::Validation(violations));
    }

    let mut state = TrainState::init(cfg, dims)?;
    let mut trace = LossTrace {
        g_loss_form: cfg.g_loss_form,
        records: Vec::with_capacity(cfg.iterations),
    };
    let mut snapshots = vec![Snapshot {
        iteration: 0,
        bytes: state.generator_checkpoint(cfg.seed),
    }];

    for i in 1..=cfg.iterations {
        match train_step(&mut state, cfg, mixture, noise) {
            Ok(record) => trace.records.push(record),
            Err(err) => {
                return Err(TrainError::Aborted(Box::new(TrainAbort {
                    iteration: i,
                    reason: err.to_string(),
                    trace,
                    snapshots,
                })));
            }
        }
        if i.is_multiple_of(cfg.snapshot_every) {
            snapshots.push(Snapshot {
                iteration: i,
                bytes: state.generator_checkpoint(cfg.seed),
            });
        }
    }
    if !cfg.iterations.is_multiple_of(cfg.snapshot_every) {
        snapshots.push(Snapshot {
            iteration: cfg.iterations,
            bytes: state.generator_checkpoint(cfg.seed),
        });
    }
    Ok(TrainRun {
        state,
        trace,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ring_mixture;
    use crate::tensor::sigmoid;
    use rand::Rng;

    fn small_dims() -> NetworkDims {
        NetworkDims {
            generator: vec![4, 16, 2],
            discriminator: vec![2, 16, 1],
            encoder: vec![2, 16, 8],
            head: vec![8, 8, 1],
            generator_out: Activation::Identity,
        }
    }

    fn small_cfg(mode: Mode, lambda1: f64, lambda2: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: 20,
            batch_size: 16,
            adversary_period: 1,
            mode,
            lambda1,
            lambda2,
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            g_loss_form: GeneratorLossForm::NonSaturating,
            two_sample_loss_form: TwoSampleLossForm::CrossEntropy,
            seed,
            snapshot_every: 10,
        }
    }

    fn noise4() -> NoiseSpec {
        NoiseSpec { dim: 4 }
    }

    fn target() -> MixtureSpec {
        ring_mixture(4, 1.0, 0.05).unwrap()
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut cfg = small_cfg(Mode::TwoSample, -1.0, 0.0, 1);
        cfg.iterations = 0;
        cfg.batch_size = 15;
        cfg.lr = 0.0;
        let violations = cfg.violations();
        assert!(violations.len() >= 5, "{violations:?}");
        let text = violations.join("\n");
        assert!(text.contains("iterations"));
        assert!(text.contains("even"));
        assert!(text.contains("lambda"));
        assert!(text.contains("lr"));
    }

    #[test]
    fn zero_iterations_rejected_by_run_training() {
        let mut cfg = small_cfg(Mode::GanOnly, 1.0, 0.0, 1);
        cfg.iterations = 0;
        let err = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap_err();
        assert!(matches!(err, TrainError::Validation(_)));
    }

    #[test]
    fn same_seed_gives_bitwise_identical_checkpoints() {
        let cfg = small_cfg(Mode::SampleClassifier, 0.0, 1.0, 42);
        let a = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
        let b = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
        assert_eq!(
            a.state.generator_checkpoint(cfg.seed),
            b.state.generator_checkpoint(cfg.seed)
        );
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.bytes, sb.bytes);
        }
    }

    #[test]
    fn snapshot_cadence_includes_init_and_final() {
        let mut cfg = small_cfg(Mode::GanOnly, 1.0, 0.0, 3);
        cfg.iterations = 10;
        cfg.snapshot_every = 4;
        let run = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
        let iters: Vec<usize> = run.snapshots.iter().map(|s| s.iteration).collect();
        assert_eq!(iters, vec![0, 4, 8, 10]);
    }

    #[test]
    fn lambda2_zero_reduces_to_gan_bitwise() {
        let gan = small_cfg(Mode::GanOnly, 1.0, 0.0, 7);
        let reduced_s = TrainConfig {
            mode: Mode::SampleClassifier,
            ..gan.clone()
        };
        let reduced_2s = TrainConfig {
            mode: Mode::TwoSample,
            ..gan.clone()
        };
        let base = run_training(&gan, &small_dims(), &target(), &noise4()).unwrap();
        for cfg in [reduced_s, reduced_2s] {
            let run = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
            assert_eq!(
                base.state.generator_checkpoint(7),
                run.state.generator_checkpoint(7),
                "generator trajectories must be identical at lambda2 = 0"
            );
            let d_base = write_checkpoint(
                base.state.discriminator_store(),
                &CheckpointMeta {
                    seed: 7,
                    network: "discriminator".into(),
                },
            );
            let d_run = write_checkpoint(
                run.state.discriminator_store(),
                &CheckpointMeta {
                    seed: 7,
                    network: "discriminator".into(),
                },
            );
            assert_eq!(d_base, d_run);
        }
    }

    #[test]
    fn lambda1_zero_leaves_discriminator_untouched() {
        let cfg = small_cfg(Mode::SampleClassifier, 0.0, 1.0, 11);
        let before = TrainState::init(&cfg, &small_dims())
            .unwrap()
            .discriminator_store()
            .flat_values();
        let run = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
        assert_eq!(run.state.discriminator_store().flat_values(), before);
        // And the trace reflects that the phase never ran.
        assert!(run.trace.records.iter().all(|r| r.loss_d.is_none()));
    }

    #[test]
    fn schedule_counts_follow_the_period() {
        let mut cfg = small_cfg(Mode::SampleClassifier, 1.0, 1.0, 13);
        cfg.iterations = 12;
        cfg.adversary_period = 5;
        let run = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
        assert_eq!(run.trace.records.len(), 12);
        let d_updates = run.trace.records.iter().filter(|r| r.loss_d.is_some()).count();
        let m_updates = run.trace.records.iter().filter(|r| r.loss_m.is_some()).count();
        assert_eq!(d_updates, 12);
        assert_eq!(m_updates, 12 / 5);
        for r in &run.trace.records {
            assert_eq!(r.loss_m.is_some(), r.iteration % 5 == 0);
        }
        assert_eq!(run.trace.g_loss_form, cfg.g_loss_form);
    }

    #[test]
    fn phases_only_touch_their_own_network() {
        let cfg = small_cfg(Mode::SampleClassifier, 1.0, 1.0, 17);
        let mixture = target();
        let noise = noise4();
        let mut state = TrainState::init(&cfg, &small_dims()).unwrap();

        let g0 = state.generator_store().flat_values();
        let d0 = state.discriminator_store().flat_values();
        let m0 = state.adversary_store().unwrap().flat_values();

        discriminator_phase(&mut state, &cfg, &mixture, &noise).unwrap();
        assert_eq!(state.generator_store().flat_values(), g0);
        assert_eq!(state.adversary_store().unwrap().flat_values(), m0);
        let d1 = state.discriminator_store().flat_values();
        assert_ne!(d1, d0);

        adversary_phase(&mut state, &cfg, &mixture, &noise).unwrap();
        assert_eq!(state.generator_store().flat_values(), g0);
        assert_eq!(state.discriminator_store().flat_values(), d1);
        let m1 = state.adversary_store().unwrap().flat_values();
        assert_ne!(m1, m0);

        generator_phase(&mut state, &cfg, &mixture, &noise).unwrap();
        assert_eq!(state.discriminator_store().flat_values(), d1);
        assert_eq!(state.adversary_store().unwrap().flat_values(), m1);
        assert_ne!(state.generator_store().flat_values(), g0);

        // Frozen networks thaw again after the generator phase.
        assert!(state.discriminator_store().iter().all(|(_, t)| t.requires_grad()));
        assert!(state
            .adversary_store()
            .unwrap()
            .iter()
            .all(|(_, t)| t.requires_grad()));
    }

    #[test]
    fn two_sample_update_sees_two_same_and_two_different_pairs() {
        // Replay the adversary phase by hand from cloned streams and check
        // the recorded loss equals the four-pair objective with targets
        // same, same, different, different.
        let cfg = small_cfg(Mode::TwoSample, 0.0, 1.0, 19);
        let mixture = target();
        let noise = noise4();
        let mut state = TrainState::init(&cfg, &small_dims()).unwrap();
        let (mut data_rng, mut noise_rng) = state.clone_rngs();

        let loss = adversary_phase(&mut state, &cfg, &mixture, &noise).unwrap();

        // Replay the draws; the generator was untouched by the phase, and
        // the adversary's parameters moved only after the loss was
        // computed, so a fresh state recomputes exactly what the phase saw.
        let (x, _) = sample_mixture(&mixture, cfg.batch_size, &mut data_rng);
        let z = sample_noise(&noise, cfg.batch_size, &mut noise_rng);
        let fake = state.generator.generate(&z).unwrap().detach();
        let (x1, x2) = split_half(&x).unwrap();
        let (f1, f2) = split_half(&fake).unwrap();
        let fresh = TrainState::init(&cfg, &small_dims()).unwrap();
        let fresh_model = match &fresh.adversary {
            Adversary::TwoSample { model, .. } => model,
            _ => unreachable!(),
        };
        let form = TwoSampleLossForm::CrossEntropy;
        let expected = fresh_model
            .loss(&x1, &x2, true, form)
            .unwrap()
            .add(&fresh_model.loss(&f1, &f2, true, form).unwrap())
            .unwrap()
            .add(&fresh_model.loss(&x1, &f2, false, form).unwrap())
            .unwrap()
            .add(&fresh_model.loss(&f1, &x2, false, form).unwrap())
            .unwrap()
            .item();
        assert!(
            (loss - expected).abs() < 1e-12,
            "phase loss {loss} vs replayed four-pair loss {expected}"
        );
    }

    #[test]
    fn one_gan_iteration_matches_hand_assembled_gradients() {
        // Tiny nets: G and D are single affine maps in one dimension. One
        // full iteration is recomputed with scalar arithmetic, Adam
        // recurrences included, and must match to near round-off.
        let mut cfg = small_cfg(Mode::GanOnly, 1.0, 0.0, 23);
        cfg.iterations = 1;
        cfg.batch_size = 2;
        cfg.g_loss_form = GeneratorLossForm::NonSaturating;
        let dims = NetworkDims {
            generator: vec![1, 1],
            discriminator: vec![1, 1],
            encoder: vec![1, 1],
            head: vec![1, 1],
            generator_out: Activation::Identity,
        };
        let mixture = MixtureSpec::new(
            1,
            vec![crate::data::MixtureComponent {
                mean: vec![1.0],
                variance: 0.25,
                weight: 1.0,
            }],
        )
        .unwrap();
        let noise = NoiseSpec { dim: 1 };

        let mut state = TrainState::init(&cfg, &dims).unwrap();
        let (mut data_rng, mut noise_rng) = state.clone_rngs();
        let w_g0 = state.generator_store().flat_values();
        let w_d0 = state.discriminator_store().flat_values();

        train_step(&mut state, &cfg, &mixture, &noise).unwrap();

        // --- replay the draws in phase order ---
        let (x, _) = sample_mixture(&mixture, 2, &mut data_rng);
        let z1 = sample_noise(&noise, 2, &mut noise_rng);
        let z2 = sample_noise(&noise, 2, &mut noise_rng);
        let (x, z1, z2) = (x.to_vec(), z1.to_vec(), z2.to_vec());

        let (wg, bg) = (w_g0[0], w_g0[1]);
        let (wd, bd) = (w_d0[0], w_d0[1]);

        // --- phase 1: discriminator ascent on x and detached fakes ---
        let mut gw = 0.0;
        let mut gb = 0.0;
        for &xi in &x {
            // d/d(u) log sigmoid(u) = 1 - p
            let p = sigmoid(wd * xi + bd);
            gw += (1.0 - p) * xi / 2.0;
            gb += (1.0 - p) / 2.0;
        }
        for &zi in &z1 {
            let fake = wg * zi + bg;
            let p = sigmoid(wd * fake + bd);
            gw += -p * fake / 2.0;
            gb += -p / 2.0;
        }
        // Ascent with weight lambda1 = minimizing the negated loss.
        let adam1 = |g: f64, lr: f64, b1: f64, b2: f64, eps: f64| {
            let m = (1.0 - b1) * g;
            let v = (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1);
            let v_hat = v / (1.0 - b2);
            lr * m_hat / (v_hat.sqrt() + eps)
        };
        let wd1 = wd - adam1(-gw, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
        let bd1 = bd - adam1(-gb, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

        // --- phase 3: generator descent of -(1/B) sum log D(G(z)) ---
        let mut gw_g = 0.0;
        let mut gb_g = 0.0;
        for &zi in &z2 {
            let fake = wg * zi + bg;
            let p = sigmoid(wd1 * fake + bd1);
            // d/d(fake) of -log sigmoid(u), u = wd1 fake + bd1
            let dfake = -(1.0 - p) * wd1;
            gw_g += dfake * zi / 2.0;
            gb_g += dfake / 2.0;
        }
        let wg1 = wg - adam1(gw_g, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
        let bg1 = bg - adam1(gb_g, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

        let got_d = state.discriminator_store().flat_values();
        let got_g = state.generator_store().flat_values();
        assert!((got_d[0] - wd1).abs() < 1e-12, "{} vs {wd1}", got_d[0]);
        assert!((got_d[1] - bd1).abs() < 1e-12, "{} vs {bd1}", got_d[1]);
        assert!((got_g[0] - wg1).abs() < 1e-12, "{} vs {wg1}", got_g[0]);
        assert!((got_g[1] - bg1).abs() < 1e-12, "{} vs {bg1}", got_g[1]);
    }

    #[test]
    fn generator_forms_agree_at_half_confidence() {
        // D(0) = 0.5 with nonzero slope: both forms push the input the same
        // way with the same magnitude.
        let d_net = MlpNet::init(&[1, 1], Activation::Identity, Activation::Sigmoid, 0).unwrap();
        d_net.layers()[0].0.weight.set_data(&[2.0]);
        let d = PointwiseDiscriminator::new(d_net).unwrap();
        let grad_of = |form: GeneratorLossForm| {
            let fake = Tensor::from_rows(&[vec![0.0]]).unwrap();
            fake.set_requires_grad(true);
            g_pointwise_term(&d, &fake, form).unwrap().backward().unwrap();
            fake.grad().unwrap()[0]
        };
        let sat = grad_of(GeneratorLossForm::Saturating);
        let nonsat = grad_of(GeneratorLossForm::NonSaturating);
        assert!((sat - nonsat).abs() < 1e-12, "{sat} vs {nonsat}");
        assert!((sat + 1.0).abs() < 1e-12, "expected -1, got {sat}");
    }

    #[test]
    fn saturating_form_explodes_where_nonsaturating_stays_bounded() {
        // Loss-versus-confidence slope on a one-parameter toy: with the
        // discriminator at 1 - eps on every fake, d/dp log(1-p) = -1/eps
        // while d/dp (-log p) stays near -1.
        let slope = |eps: f64| {
            let p = Tensor::scalar(1.0 - eps);
            p.set_requires_grad(true);
            p.sub_from_scalar(1.0).log().backward().unwrap();
            let saturating = p.grad().unwrap()[0];
            let p2 = Tensor::scalar(1.0 - eps);
            p2.set_requires_grad(true);
            p2.log().neg().backward().unwrap();
            let nonsaturating = p2.grad().unwrap()[0];
            (saturating, nonsaturating)
        };
        let (sat2, non2) = slope(1e-2);
        let (sat3, non3) = slope(1e-3);
        assert!((sat2 + 100.0).abs() < 1e-6);
        assert!((sat3 + 1000.0).abs() < 1e-3);
        assert!((sat3 / sat2 - 10.0).abs() < 1e-9, "explosion scales with 1/eps");
        assert!(non2.abs() < 1.02 && non3.abs() < 1.01, "{non2}, {non3}");
    }

    #[test]
    fn runaway_parameters_abort_with_partial_results() {
        let mut cfg = small_cfg(Mode::GanOnly, 1.0, 0.0, 29);
        cfg.lr = 1e308;
        cfg.iterations = 60;
        let err = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap_err();
        match err {
            TrainError::Aborted(abort) => {
                assert!(abort.iteration >= 1);
                assert!(
                    abort.reason.contains("non-finite"),
                    "reason: {}",
                    abort.reason
                );
                assert!(!abort.snapshots.is_empty());
                assert_eq!(abort.trace.records.len(), abort.iteration - 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn two_sample_training_runs_and_moves_the_generator() {
        let mut cfg = small_cfg(Mode::TwoSample, 0.0, 1.0, 31);
        cfg.iterations = 10;
        let init = TrainState::init(&cfg, &small_dims()).unwrap();
        let before = init.generator_store().flat_values();
        let run = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
        assert_ne!(run.state.generator_store().flat_values(), before);
        assert!(run.trace.records.iter().all(|r| r.loss_m.is_some()));
        assert!(run.trace.records.iter().all(|r| r.loss_d.is_none()));
    }

    #[test]
    fn verbatim_two_sample_form_shifts_the_loss_value() {
        let mut cfg = small_cfg(Mode::TwoSample, 0.0, 1.0, 37);
        cfg.iterations = 1;
        let mut state_ce = TrainState::init(&cfg, &small_dims()).unwrap();
        let loss_ce =
            adversary_phase(&mut state_ce, &cfg, &target(), &noise4()).unwrap();

        let mut cfg_v = cfg.clone();
        cfg_v.two_sample_loss_form = TwoSampleLossForm::Verbatim;
        let mut state_v = TrainState::init(&cfg_v, &small_dims()).unwrap();
        let loss_v = adversary_phase(&mut state_v, &cfg_v, &target(), &noise4()).unwrap();
        // Same draws, same nets: the difference is exactly the form change
        // on the two different-pairs.
        assert!(loss_v != loss_ce);
    }

    #[test]
    fn random_mode_smoke_with_both_lambdas() {
        let mut rng = stream(99, Stream::EvalNoise);
        for mode in [Mode::SampleClassifier, Mode::TwoSample] {
            let mut cfg = small_cfg(mode, 1.0, 0.2, rng.random());
            cfg.iterations = 5;
            let run = run_training(&cfg, &small_dims(), &target(), &noise4()).unwrap();
            assert_eq!(run.trace.records.len(), 5);
            assert!(run.trace.records.iter().all(|r| r.loss_d.is_some()));
        }
    }
}

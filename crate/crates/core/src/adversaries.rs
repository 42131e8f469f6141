//! The discriminator family and its losses.
//!
//! Four players appear across the experiments:
//!
//! - [`GeneratorNet`]: maps latent noise to the data space.
//! - [`PointwiseDiscriminator`]: classifies one point at a time; its loss
//!   averages per-point log terms.
//! - [`SampleClassifier`]: classifies a whole sample through a deep mean
//!   encoding, so the expectation sits inside the classifier.
//! - [`TwoSampleDiscriminator`]: predicts from the absolute difference of
//!   two deep mean encodings whether two samples share a distribution.
//!
//! Losses are written from the adversary's point of view: the adversary
//! ascends them, and the training loop owns all signs and weights.
//!
//! Every classifier head output is clamped to `[1e-7, 1 - 1e-7]` before it
//! can reach a log, which keeps saturated heads from emitting infinities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, MlpNet, NnError, ParamStore};
use crate::tensor::Tensor;

/// Classifier outputs live in `[HEAD_CLAMP, 1 - HEAD_CLAMP]`.
pub const HEAD_CLAMP: f64 = 1e-7;

fn clamp_prob(t: &Tensor) -> Tensor {
    t.clamp(HEAD_CLAMP, 1.0 - HEAD_CLAMP)
}

/// Which algebraic form the two-sample objective uses for "different"
/// pairs: binary cross-entropy `log(1 - p)`, or the literal `1 - log(p)`
/// kept selectable for comparison. Cross-entropy is the default; the
/// literal form is unbounded under ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoSampleLossForm {
    CrossEntropy,
    Verbatim,
}

/// G: latent noise `[B x m]` to data space `[B x n]`.
pub struct GeneratorNet {
    pub net: MlpNet,
}

impl GeneratorNet {
    pub fn new(net: MlpNet) -> GeneratorNet {
        GeneratorNet { net }
    }

    pub fn generate(&self, noise: &Tensor) -> Result<Tensor, NnError> {
        self.net.forward(noise)
    }

    pub fn param_store(&self) -> ParamStore {
        self.net.param_store("generator")
    }
}

/// D: one data-space point to the probability it is real.
pub struct PointwiseDiscriminator {
    pub net: MlpNet,
}

impl PointwiseDiscriminator {
    pub fn new(net: MlpNet) -> Result<PointwiseDiscriminator, NnError> {
        if net.out_dim() != 1 {
            return Err(NnError::Dimension(format!(
                "pointwise discriminator must end in one unit, got {}",
                net.out_dim()
            )));
        }
        Ok(PointwiseDiscriminator { net })
    }

    /// `[B x n] -> [B x 1]` of clamped probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, NnError> {
        Ok(clamp_prob(&self.net.forward(x)?))
    }

    /// `(1/B) sum[log D(real_i)] + (1/B) sum[log(1 - D(fake_i))]`.
    /// The adversary ascends this; its optimum against a fixed generator is
    /// the Jensen-Shannon point.
    pub fn loss(&self, real: &Tensor, fake: &Tensor) -> Result<Tensor, NnError> {
        let real_term = self.predict(real)?.log().mean_rows()?;
        let fake_term = self.predict(fake)?.sub_from_scalar(1.0).log().mean_rows()?;
        Ok(real_term.add(&fake_term)?)
    }

    pub fn param_store(&self) -> ParamStore {
        self.net.param_store("discriminator")
    }
}

/// The deep mean encoder: a per-point feature trunk averaged over the
/// sample. Output shape is `[1 x d_enc]` for any batch size.
pub struct DeepMeanEncoder {
    pub phi: MlpNet,
}

impl DeepMeanEncoder {
    pub fn new(phi: MlpNet) -> DeepMeanEncoder {
        DeepMeanEncoder { phi }
    }

    pub fn encoding_dim(&self) -> usize {
        self.phi.out_dim()
    }

    /// `(1/B) sum_i phi(x_i)`, differentiable through the trunk and the
    /// mean. Permutation of sample rows cannot change the result beyond
    /// summation round-off.
    pub fn encode(&self, sample: &Tensor) -> Result<Tensor, NnError> {
        if sample.rows() == 0 {
            return Err(NnError::Dimension("encode: empty sample".into()));
        }
        Ok(self.phi.forward(sample)?.mean_rows()?)
    }
}

/// Sample classifier: head applied to the deep mean encoding of one sample.
pub struct SampleClassifier {
    pub encoder: DeepMeanEncoder,
    pub head: MlpNet,
}

impl SampleClassifier {
    pub fn new(encoder: DeepMeanEncoder, head: MlpNet) -> Result<SampleClassifier, NnError> {
        if head.in_dim() != encoder.encoding_dim() {
            return Err(NnError::Dimension(format!(
                "classifier head takes width {}, encoder emits {}",
                head.in_dim(),
                encoder.encoding_dim()
            )));
        }
        if head.out_dim() != 1 {
            return Err(NnError::Dimension(format!(
                "classifier head must end in one unit, got {}",
                head.out_dim()
            )));
        }
        Ok(SampleClassifier { encoder, head })
    }

    /// Build trunk and head from layer widths off one stream. Trunk layers
    /// are all relu (its last width is the encoding), head is relu hidden
    /// with a sigmoid unit on top.
    pub fn init_with_rng(
        phi_dims: &[usize],
        head_dims: &[usize],
        rng: &mut impl Rng,
    ) -> Result<SampleClassifier, NnError> {
        let phi = MlpNet::init_with_rng(phi_dims, Activation::Relu, Activation::Relu, rng)?;
        let head = MlpNet::init_with_rng(head_dims, Activation::Relu, Activation::Sigmoid, rng)?;
        SampleClassifier::new(DeepMeanEncoder::new(phi), head)
    }

    /// Clamped probability that the sample came from the data distribution.
    pub fn predict_tensor(&self, sample: &Tensor) -> Result<Tensor, NnError> {
        Ok(clamp_prob(&self.head.forward(&self.encoder.encode(sample)?)?))
    }

    pub fn predict(&self, sample: &Tensor) -> Result<f64, NnError> {
        Ok(self.predict_tensor(sample)?.item())
    }

    /// `log psi(eta(real)) + log(1 - psi(eta(fake)))`; the adversary
    /// ascends this.
    pub fn loss(&self, real: &Tensor, fake: &Tensor) -> Result<Tensor, NnError> {
        let on_real = self.predict_tensor(real)?.log();
        let on_fake = self.predict_tensor(fake)?.sub_from_scalar(1.0).log();
        Ok(on_real.add(&on_fake)?)
    }

    pub fn param_store(&self) -> ParamStore {
        let mut store = self.encoder.phi.param_store("adversary.phi");
        store.extend(self.head.param_store("adversary.head"));
        store
    }
}

/// Two-sample discriminator: one shared encoder feeds both inputs, the head
/// reads the absolute difference of their encodings.
pub struct TwoSampleDiscriminator {
    pub encoder: DeepMeanEncoder,
    pub head: MlpNet,
}

impl TwoSampleDiscriminator {
    pub fn new(encoder: DeepMeanEncoder, head: MlpNet) -> Result<TwoSampleDiscriminator, NnError> {
        if head.in_dim() != encoder.encoding_dim() {
            return Err(NnError::Dimension(format!(
                "two-sample head takes width {}, encoder emits {}",
                head.in_dim(),
                encoder.encoding_dim()
            )));
        }
        if head.out_dim() != 1 {
            return Err(NnError::Dimension(format!(
                "two-sample head must end in one unit, got {}",
                head.out_dim()
            )));
        }
        Ok(TwoSampleDiscriminator { encoder, head })
    }

    pub fn init_with_rng(
        phi_dims: &[usize],
        head_dims: &[usize],
        rng: &mut impl Rng,
    ) -> Result<TwoSampleDiscriminator, NnError> {
        let phi = MlpNet::init_with_rng(phi_dims, Activation::Relu, Activation::Relu, rng)?;
        let head = MlpNet::init_with_rng(head_dims, Activation::Relu, Activation::Sigmoid, rng)?;
        TwoSampleDiscriminator::new(DeepMeanEncoder::new(phi), head)
    }

    /// `psi(|eta(a) - eta(b)|)` as a graph node. Near 1 means "same
    /// distribution". Symmetric in its arguments up to round-off.
    pub fn predict_tensor(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
        let ea = self.encoder.encode(a)?;
        let eb = self.encoder.encode(b)?;
        let gap = ea.sub(&eb)?.abs();
        Ok(clamp_prob(&self.head.forward(&gap)?))
    }

    pub fn predict(&self, a: &Tensor, b: &Tensor) -> Result<f64, NnError> {
        Ok(self.predict_tensor(a, b)?.item())
    }

    /// Loss of predicting `p = predict(a, b)` against the label `same`.
    /// Same-pairs score `log p` in both forms; different-pairs score
    /// `log(1 - p)` under cross-entropy and the literal `1 - log p` under
    /// [`TwoSampleLossForm::Verbatim`]. The adversary ascends the sum over
    /// its four training pairs.
    pub fn loss(
        &self,
        a: &Tensor,
        b: &Tensor,
        same: bool,
        form: TwoSampleLossForm,
    ) -> Result<Tensor, NnError> {
        let p = self.predict_tensor(a, b)?;
        let value = if same {
            p.log()
        } else {
            match form {
                TwoSampleLossForm::CrossEntropy => p.sub_from_scalar(1.0).log(),
                TwoSampleLossForm::Verbatim => p.log().sub_from_scalar(1.0),
            }
        };
        Ok(value)
    }

    pub fn param_store(&self) -> ParamStore {
        let mut store = self.encoder.phi.param_store("adversary.phi");
        store.extend(self.head.param_store("adversary.head"));
        store
    }
}

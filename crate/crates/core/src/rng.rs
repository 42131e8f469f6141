//! Seeded RNG streams.
//!
//! One run owns a master seed; every consumer of randomness draws from its
//! own ChaCha stream derived from that seed. Streams are independent, so
//! e.g. changing the minibatch size (which consumes more data draws) never
//! perturbs network initialization, and adding an adversary never perturbs
//! the generator's init.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The fixed purposes randomness is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    GeneratorInit,
    DiscriminatorInit,
    AdversaryInit,
    /// Real-data minibatches during training.
    Data,
    /// Latent noise minibatches during training.
    Noise,
    /// Latent noise drawn at evaluation time.
    EvalNoise,
    /// Real-data reference samples drawn at evaluation time.
    EvalData,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::GeneratorInit => 1,
            Stream::DiscriminatorInit => 2,
            Stream::AdversaryInit => 3,
            Stream::Data => 4,
            Stream::Noise => 5,
            Stream::EvalNoise => 6,
            Stream::EvalData => 7,
        }
    }
}

/// Deterministic generator for `(master_seed, stream)`.
pub fn stream(master_seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(purpose.id());
    rng
}

//! Desk-scale laboratory for distributional adversarial training.
//!
//! The crate trains small generative models against three kinds of
//! adversaries — a pointwise discriminator, a sample classifier over a deep
//! mean encoding, and a two-sample discriminator over encoding differences —
//! and ships the sampling, evaluation and gradient-analysis machinery needed
//! to study mode collapse on synthetic Gaussian mixtures.
//!
//! Layout:
//! - [`tensor`]: dense 2-D tensors with reverse-mode autodiff
//! - [`nn`]: feed-forward networks, Adam, checkpointing
//! - [`data`]: Gaussian mixtures, the ring target, latent noise
//! - [`adversaries`]: discriminator family and its losses
//! - [`training`]: the alternating training loop
//! - [`evaluation`]: mode-recovery metrics and an MMD diagnostic
//! - [`analysis`]: closed-form optimal-discriminator gradient study

pub mod adversaries;
pub mod analysis;
pub mod data;
pub mod evaluation;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;

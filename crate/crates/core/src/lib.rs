//! Fair and robust training through clean sample selection.
//!
//! Each epoch the trainer ranks training samples by their current loss,
//! picks a low-loss subset with a greedy multidimensional-knapsack heuristic
//! that caps every `(label, sensitive)` group at an adaptive share `λ` of its
//! class, and then trains a logistic-regression model on minibatches drawn
//! from that subset in proportion to the caps. The caps are nudged between
//! epochs by a signed-gradient controller targeting equalized odds or
//! demographic parity.
//!
//! Module map:
//!
//! - [`dataset`]: tabular data with binary label and sensitive attribute.
//! - [`synth`]: the two-Gaussian synthetic benchmark with a biased attribute.
//! - [`corruption`]: label-flipping noise injection.
//! - [`model`]: logistic regression, losses, gradients, checkpoints.
//! - [`selection`]: knapsack conversion, greedy selector, exhaustive oracle.
//! - [`fairness`]: `λ` state and its update rules.
//! - [`batching`]: group-proportional minibatch sampling.
//! - [`metrics`]: accuracy and group-fairness disparities.
//! - [`trainer`]: the training loop, baselines and ablations.
//! - [`harness`]: config-driven experiments and result tables.
//! - [`selftest`]: oracle suites shipped with the binary.

pub mod batching;
pub mod corruption;
pub mod dataset;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod selection;
pub mod selftest;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The single RNG type used everywhere, so seeds reproduce across platforms.
pub type Rng = ChaCha8Rng;

/// Seeded RNG for a named stream. Distinct `stream` values give
/// independent sequences for the same seed.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Seeded randomness. Every random draw in the crate flows from a ChaCha8
//! stream (a counter-based generator) keyed by an explicit 64-bit seed.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector of length `n` (normalized i.i.d. Exp(1) draws,
/// i.e. a flat Dirichlet sample).
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// Categorical sampler over a probability vector.
pub fn categorical(probs: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(probs).expect("valid probability vector")
}

pub fn sample<R: Rng + ?Sized>(dist: &WeightedIndex<f64>, rng: &mut R) -> usize {
    dist.sample(rng)
}

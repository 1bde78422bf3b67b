//! Seeded random streams. Every random draw in the crate comes from a
//! ChaCha8 generator keyed by the configuration seed and a stream id, so
//! results do not depend on thread count or evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream ids used by the crate.
pub mod streams {
    pub const SCENARIO: u64 = 1;
    pub const SYMBOL_NE: u64 = 2;
    pub const SYMBOL_LS: u64 = 3;
}

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for sample `index` of a sweep; each sample gets its own
/// keystream position so parallel sweeps are reproducible.
pub fn sample_stream(seed: u64, stream_id: u64, index: u64) -> ChaCha8Rng {
    let mut rng = stream(seed, stream_id);
    // 2^20 words per sample is far more than any single sample consumes.
    rng.set_word_pos((index as u128) << 20);
    rng
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform direction on the unit sphere in `n` dimensions.
pub fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

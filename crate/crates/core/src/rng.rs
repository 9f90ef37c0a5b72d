//! Deterministic random streams.
//!
//! Every consumer of randomness derives a ChaCha8 stream from a user seed, a
//! domain tag and a stream index. ChaCha supports random access, so a
//! parallel worker can seek straight to its own block of words and the
//! output never depends on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams of different consumers independent even when
/// they are handed the same user seed.
pub mod domain {
    pub const LEARNER: u64 = 0x51_4c_45_41_52_4e;
    pub const GENERATOR: u64 = 0x47_45_4e_52_4e_44;
    pub const GRID_EPISODES: u64 = 0x47_52_49_44_45_50;
    pub const LIPSCHITZ: u64 = 0x4c_49_50_53;
    pub const NOISE: u64 = 0x4e_4f_49_53_45;
    pub const FLOW_STARTS: u64 = 0x46_4c_4f_57;
}

/// Base generator for `(seed, domain)`.
pub fn base(seed: u64, domain: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ domain.rotate_left(17))
}

/// Stream `stream` of the `(seed, domain)` generator, positioned at the
/// `offset`-th 64-bit word.
pub fn substream(seed: u64, domain: u64, stream: u64, offset: u64) -> ChaCha8Rng {
    let mut rng = base(seed, domain);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(offset) * 2);
    rng
}

/// Uniform draw in `[0, 1)`; consumes exactly one 64-bit word.
pub fn unit(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// Inverse-CDF lookup: the first index whose cumulative mass exceeds `u`.
///
/// When rounding leaves `u` at or above the total mass, the last index with
/// positive probability is returned.
pub fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if p > 0.0 {
            last_positive = j;
        }
        if u < acc {
            return j;
        }
    }
    last_positive
}

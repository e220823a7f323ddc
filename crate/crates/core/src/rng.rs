//! Keyed random streams.
//!
//! Every consumer of randomness derives its generator from the top-level
//! seed, a named [`Stream`] and an integer index (fold, restart, iteration).
//! Streams are independent ChaCha streams, so results do not depend on the
//! order or thread on which work units execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Fit = 1,
    Folds = 2,
    Negatives = 3,
    Bootstrap = 4,
    Permutation = 5,
    Sample = 6,
    Synth = 7,
    Subsample = 8,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) ^ index);
    rng
}

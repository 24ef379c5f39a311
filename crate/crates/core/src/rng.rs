//! Seeded random streams.
//!
//! Every run derives its generators from a `(seed, stream)` pair so that
//! independent consumers (mini-batch sampling, noise, bound estimation)
//! never perturb each other's sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Stream ids used by the training loop.
pub mod streams {
    pub const TRAIN: u64 = 0;
    pub const METER: u64 = 1;
    pub const DATA: u64 = 2;
    pub const INIT: u64 = 3;
}

pub fn stream(seed: u64, id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

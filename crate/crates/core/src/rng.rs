//! Counter-based seeding.
//!
//! Every random object (signal, graph, matrix column, per-bin noise) draws
//! from its own ChaCha stream addressed by `(seed, stream)`. Per-bin matrix
//! seeds are derived from the master matrix seeds, so matrix columns and bin
//! noise can be regenerated independently and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed number `label` of `seed`.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    stream_rng(seed, label).random()
}

/// Independent seeds for every random component of one Monte Carlo trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSeeds {
    pub signal: u64,
    pub graph: u64,
    pub test_matrix: u64,
    pub index_matrix: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn derive(master: u64, trial: u64) -> Self {
        let mut rng = stream_rng(master, trial);
        TrialSeeds {
            signal: rng.random(),
            graph: rng.random(),
            test_matrix: rng.random(),
            index_matrix: rng.random(),
            noise: rng.random(),
        }
    }
}

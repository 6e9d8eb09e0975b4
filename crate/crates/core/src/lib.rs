//! Robust PhaseCode decoding for noisy compressive phase retrieval.
//!
//! A `K`-sparse complex signal with entries on a quantized grid is hashed
//! into bins by a sparse bipartite graph. Each bin is probed with
//! magnitude-only (quadratic) measurements, and a ball-coloring decoder peels
//! the signal bin by bin. Two measurement/decoder front-ends are provided:
//!
//! * [`Scheme::AlmostLinear`]: per-bin random test matrix only; the decoder
//!   guesses every index, magnitude and relative phase and checks each guess
//!   with an l1 energy test. Decoding costs `O(n log n)`.
//! * [`Scheme::Sublinear`]: the test matrix plus bit-masked index matrices;
//!   the unknown index is read bit by bit from the index measurements, so
//!   decoding costs `O(K log^3 n)`.
//!
//! The [`harness`] module runs seeded Monte Carlo experiments and writes the
//! CSV summaries consumed by the plotting scripts.

pub mod alphabet;
pub mod code_graph;
pub mod decoder;
mod error;
pub mod harness;
pub mod hypothesis;
pub mod measurement;
pub mod oracle;
pub mod rng;

pub use alphabet::{equal_up_to_global_phase, min_rank1_gap, random_sparse_signal, AlphabetParams, QuantizedSignal};
pub use code_graph::{classify_bin, BinClass, BinKind, CodeGraph};
pub use decoder::{decode, AmbiguityPolicy, DecodeOptions, DecodeResult};
pub use error::{Error, Result};
pub use hypothesis::{default_thresholds, TestThresholds};
pub use measurement::{MeasurementSet, MeasurementSystem, NoiseModel, Scheme};
pub use oracle::{brute_force_decode, OracleResult};

//! Most-probable-explanation inference in discrete graphical models by 1-flip local
//! search, with a learned neighbor scorer.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`model`] and [`uai`]: log-space factor graphs, the UAI file formats, F(x),
//!   incremental gains and Hamming distance.
//! - [`gibbs`]: Gibbs sampling used to synthesize evidence.
//! - [`search`]: greedy best-improvement, GLS+, and the state collector.
//! - [`scorer`]: neighbor scorers (log-likelihood, oracle, attention network, combined).
//! - [`datagen`]: training-set generation with Hamming-distance labels.
//! - [`drift`]: biased-walk simulation and measured distance-reduction rates.
//! - [`eval`]: method comparisons and summary metrics.

pub mod datagen;
pub mod drift;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod scorer;
pub mod search;
pub mod uai;

pub use error::{Error, Result};
pub use model::{hamming_distance, Assignment, Factor, GraphicalModel, Move, QuerySpec};

//! Cross-modal ranking of action-reason statements against advertisement images.
//!
//! An image is described by precomputed patch features from two visual channels
//! (objects and symbolism) and by the scene-text tokens recovered from it by OCR.
//! Candidate statements are scored by a weighted sum of three distances:
//!
//! - a learned visual-semantic distance between a linear projection of the
//!   visual features and the statement's word-embedding aggregate ([`vissem`]),
//! - a scene-text semantic distance, where scene tokens are weighted by their
//!   similarity to the statement before aggregation ([`textsem`]),
//! - a lexical tf-idf distance over raw tokens, which keeps brand names and
//!   other out-of-vocabulary words in play ([`lexical`]).
//!
//! The lowest score wins ([`ranker`]); [`evaluator`] computes top-1 accuracy and
//! agreement between rankers. [`synth`] generates datasets with a known latent
//! structure so the whole pipeline can be verified end to end.
//!
//! Data-parallel loops (per-sample gradients, per-image ranking, weight grid
//! search) run on rayon when the `parallel` feature is enabled and fall back to
//! plain iterators otherwise. Reductions always happen in input order, so
//! results are bit-identical under either [`Parallelism`].

pub mod cli;
pub mod dataio;
pub mod embeddings;
mod error;
pub mod evaluator;
pub mod lexical;
pub mod linalg;
mod parallel;
pub mod ranker;
pub mod synth;
pub mod textsem;
pub mod token;
pub mod vissem;

pub use error::{Error, Result};
pub use parallel::Parallelism;

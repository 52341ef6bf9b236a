//! Learning per-player game difficulties under a completion-rate constraint.
//!
//! A dense network maps aggregated player features to a required difficulty.
//! It is trained on a cluster-aware UX loss (spread of assigned difficulties
//! plus their distance from what each player actually achieved) and then its
//! weights are pushed back into the set where the share of players who can
//! complete the challenge matches a target. The two steps alternate until the
//! distance between consecutive weight snapshots settles.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the pipeline and the
//! command-line tool live in the `dda` crate.
//!
//! Module map:
//!
//! - [`nn`]: dense network, exact backprop, Xavier init, SGD steps, weight geometry.
//! - [`loss`]: UX loss and its gradient and minimizer, achieved completion rate,
//!   projection error.
//! - [`cluster`]: z-score normalizer, k-means with minimum cluster size.
//! - [`optimize`]: UX training, completion projection, alternation, full system,
//!   distance-series diagnostics.
//! - [`synth`]: synthetic player populations, difficulty mappings, rule-based baseline.

#![no_std]

extern crate alloc;

pub mod cluster;
pub mod dataset;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod nn;
pub mod optimize;
pub mod rng;
pub mod synth;

pub use dataset::PlayerDataset;
pub use error::{Error, Result};
pub use matrix::Matrix;

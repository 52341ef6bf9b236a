//! Pipeline, file formats and command-line tool around [`dda_core`].
//!
//! `dda generate` writes a synthetic player population, `dda cluster` and
//! `dda train` fit one network per player cluster, `dda evaluate` compares the
//! learned difficulties with a rule-based baseline and `dda report` turns
//! training traces into plot-ready tables. Every output is written atomically
//! and carries a format tag and version.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod files;
pub mod formats;
pub mod model;
pub mod report;

pub use error::{Error, Result};

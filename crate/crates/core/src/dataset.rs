use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::Matrix;

/// Aggregated player features (one row per player) and the difficulty each
/// player actually reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDataset {
    features: Matrix,
    difficulty: Vec<f64>,
}

impl PlayerDataset {
    pub fn new(features: Matrix, difficulty: Vec<f64>) -> Result<Self> {
        if features.rows() != difficulty.len() {
            return Err(Error::DimensionMismatch {
                what: "difficulty count",
                expected: features.rows(),
                found: difficulty.len(),
            });
        }
        if features.cols() == 0 {
            return Err(Error::Empty("feature columns"));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        ensure_finite(&difficulty, "difficulty")?;
        Ok(Self { features, difficulty })
    }

    pub fn players(&self) -> usize {
        self.difficulty.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn difficulty(&self) -> &[f64] {
        &self.difficulty
    }

    pub fn select(&self, indices: &[usize]) -> PlayerDataset {
        PlayerDataset {
            features: self.features.select_rows(indices),
            difficulty: indices.iter().map(|&i| self.difficulty[i]).collect(),
        }
    }
}

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a marginal.
pub const MASS_TOL: f64 = 1e-12;

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    weights: DVector<f64>,
}

impl Marginal {
    pub fn new(weights: impl Into<Vec<f64>>) -> Result<Self> {
        let weights: Vec<f64> = weights.into();
        if weights.is_empty() {
            return Err(Error::Validation("marginal must be non-empty".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Validation(format!(
                "marginal entry {i} is {} (must be finite and > 0)",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Validation(format!("marginal sums to {total}, not 1")));
        }
        Ok(Self {
            weights: DVector::from_vec(weights),
        })
    }

    /// The uniform distribution on `len` points.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Validation("marginal must be non-empty".into()));
        }
        Ok(Self {
            weights: DVector::from_element(len, 1.0 / len as f64),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn total(&self) -> f64 {
        self.weights.sum()
    }
}

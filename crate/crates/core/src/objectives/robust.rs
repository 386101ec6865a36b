//! Robust transport: worst case over a finite family of cost matrices.

use nalgebra::DMatrix;

use super::{check_finite, Objective};
use crate::error::{Error, Result};

/// `max_k <gamma, C_k>`, or its log-sum-exp smoothing
/// `tau log sum_k exp(<gamma, C_k> / tau)` when `temperature > 0`.
///
/// The hard max is nonsmooth; its gradient is the cost matrix attaining the
/// maximum, ties going to the lowest index.
#[derive(Debug, Clone)]
pub struct RobustMax {
    costs: Vec<DMatrix<f64>>,
    temperature: f64,
}

pub fn robust_max(costs: Vec<DMatrix<f64>>, temperature: f64) -> Result<RobustMax> {
    let Some(first) = costs.first() else {
        return Err(Error::Validation(
            "robust objective needs at least one cost matrix".into(),
        ));
    };
    let shape = first.shape();
    for (k, c) in costs.iter().enumerate() {
        if c.shape() != shape {
            return Err(Error::Shape {
                expected: shape,
                got: c.shape(),
            });
        }
        check_finite(&format!("cost matrix {k}"), c)?;
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Validation(format!(
            "temperature must be >= 0, got {temperature}"
        )));
    }
    Ok(RobustMax { costs, temperature })
}

impl RobustMax {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    fn values(&self, gamma: &DMatrix<f64>) -> Vec<f64> {
        self.costs.iter().map(|c| gamma.dot(c)).collect()
    }

    /// Index of the maximal value, lowest index on ties.
    fn argmax(values: &[f64]) -> usize {
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = k;
            }
        }
        best
    }

    fn softmax(&self, values: &[f64]) -> Vec<f64> {
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = values.iter().map(|v| ((v - top) / self.temperature).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

impl Objective for RobustMax {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![self.costs[0].shape()]
    }

    fn cost(&self, x: &[&DMatrix<f64>]) -> f64 {
        let values = self.values(x[0]);
        if self.temperature == 0.0 {
            return values[Self::argmax(&values)];
        }
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = values.iter().map(|v| ((v - top) / self.temperature).exp()).sum();
        top + self.temperature * sum.ln()
    }

    fn egrad(&self, x: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let values = self.values(x[0]);
        if self.temperature == 0.0 {
            return vec![self.costs[Self::argmax(&values)].clone()];
        }
        let w = self.softmax(&values);
        let mut g = DMatrix::zeros(x[0].nrows(), x[0].ncols());
        for (wk, c) in w.iter().zip(&self.costs) {
            g += c * *wk;
        }
        vec![g]
    }

    fn ehess_vec(&self, x: &[&DMatrix<f64>], dir: &[&DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        if self.temperature == 0.0 {
            return None;
        }
        let w = self.softmax(&self.values(x[0]));
        let dv: Vec<f64> = self.costs.iter().map(|c| dir[0].dot(c)).collect();
        let mean: f64 = w.iter().zip(&dv).map(|(a, b)| a * b).sum();
        let mut h = DMatrix::zeros(x[0].nrows(), x[0].ncols());
        for ((wk, dk), c) in w.iter().zip(&dv).zip(&self.costs) {
            h += c * (wk * (dk - mean) / self.temperature);
        }
        Some(vec![h])
    }

    fn has_hessian(&self) -> bool {
        self.temperature > 0.0
    }
}

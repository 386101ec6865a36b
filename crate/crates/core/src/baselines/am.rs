use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::{check_plan, max_abs_diff, validate_common, DEFAULT_MOVE_TOL};
use crate::error::{Error, Result};
use crate::manifold::Coupling;
use crate::objectives::{Coot, Objective};
use crate::sinkhorn::{entropic_lmo, SinkhornConfig};
use crate::solvers::{SolveResult, Status, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    pub max_time: Option<Duration>,
    pub move_tol: f64,
    pub sinkhorn: SinkhornConfig,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            max_iter: 500,
            max_time: None,
            move_tol: DEFAULT_MOVE_TOL,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Validation("alternate minimization needs max_iter >= 1".into()));
        }
        validate_common(self.epsilon, self.move_tol, &self.sinkhorn, self.max_time)
    }
}

fn neg_entropy(p: &DMatrix<f64>) -> f64 {
    p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum()
}

/// `COOT(g1, g2) + epsilon * (sum g1 log g1 + sum g2 log g2)`, with the COOT
/// term evaluated exactly for the given plans.
pub fn coot_surrogate(coot: &Coot, g1: &DMatrix<f64>, g2: &DMatrix<f64>, epsilon: f64) -> f64 {
    coot.sample_cost_matrix(g2).dot(g1) + epsilon * (neg_entropy(g1) + neg_entropy(g2))
}

/// Block-coordinate descent on the entropic COOT surrogate. One sweep solves
/// for the sample coupling with the feature coupling fixed, then the reverse.
/// Each half-step is an entropic linear OT solve.
///
/// `x0` is `[sample plan, feature plan]`; zeros are allowed. The trace
/// records the COOT cost after every sweep with empty gradient and step
/// columns.
pub fn coot_am(coot: &Coot, x0: &[DMatrix<f64>], cfg: &AmConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if x0.len() != 2 {
        return Err(Error::Arity {
            expected: 2,
            got: x0.len(),
        });
    }
    let (mu1, mu2, nu1, nu2) = coot.marginals();
    check_plan(&x0[0], mu1, mu2)?;
    check_plan(&x0[1], nu1, nu2)?;

    let start = Instant::now();
    let (mut g1, mut g2) = (x0[0].clone(), x0[1].clone());
    let mut trace = vec![TraceRecord {
        iter: 0,
        elapsed_sec: start.elapsed().as_secs_f64(),
        cost: coot.cost(&[&g1, &g2]),
        grad_norm: None,
        step_size: None,
    }];
    let mut status = Status::IterationCap;
    for t in 0..cfg.max_iter {
        if t > 0 && cfg.max_time.is_some_and(|b| start.elapsed() >= b) {
            status = Status::TimeCap;
            break;
        }
        let next1 = entropic_lmo(&coot.sample_cost_matrix(&g2), mu1, mu2, cfg.epsilon, &cfg.sinkhorn)?;
        let next2 = entropic_lmo(&coot.feature_cost_matrix(&next1), nu1, nu2, cfg.epsilon, &cfg.sinkhorn)?;
        let moved = max_abs_diff(&next1, &g1).max(max_abs_diff(&next2, &g2));
        g1 = next1;
        g2 = next2;
        trace.push(TraceRecord {
            iter: t + 1,
            elapsed_sec: start.elapsed().as_secs_f64(),
            cost: coot.cost(&[&g1, &g2]),
            grad_norm: None,
            step_size: None,
        });
        if moved <= cfg.move_tol {
            status = Status::Converged;
            break;
        }
    }
    Ok(SolveResult {
        point: vec![Coupling::from_plan_unchecked(g1), Coupling::from_plan_unchecked(g2)],
        trace,
        status,
    })
}

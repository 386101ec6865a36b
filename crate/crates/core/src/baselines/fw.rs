use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::{check_plan, max_abs_diff, validate_common, DEFAULT_MOVE_TOL};
use crate::error::{Error, Result};
use crate::manifold::{Coupling, TransportManifold};
use crate::marginal::Marginal;
use crate::objectives::Objective;
use crate::sinkhorn::{entropic_lmo, SinkhornConfig};
use crate::solvers::{SolveResult, Status, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `gamma_t = 2 / (t + 2)`.
    #[default]
    Harmonic,
    /// `gamma_t = 1`: the next iterate is the oracle output itself.
    Fixed,
    /// Exact minimization over `[0, 1]`; quadratic objectives only.
    ExactLineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwConfig {
    pub epsilon: f64,
    pub steps: StepRule,
    pub max_iter: usize,
    pub max_time: Option<Duration>,
    pub move_tol: f64,
    pub sinkhorn: SinkhornConfig,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            steps: StepRule::Harmonic,
            max_iter: 500,
            max_time: None,
            move_tol: DEFAULT_MOVE_TOL,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl FwConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.epsilon, self.move_tol, &self.sinkhorn, self.max_time)
    }
}

/// Frank-Wolfe over the transport polytope. Each step moves toward
/// `entropic_lmo(grad f(x), mu1, mu2, epsilon)`; the reported cost is the
/// unregularized objective.
///
/// The trace has `step_size` and the Fisher gradient norm for the harmonic
/// and line-search rules; both are left empty for [`StepRule::Fixed`].
pub fn frank_wolfe(
    objective: &dyn Objective,
    mu1: &Marginal,
    mu2: &Marginal,
    x0: &DMatrix<f64>,
    cfg: &FwConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if objective.arity() != 1 {
        return Err(Error::Arity {
            expected: 1,
            got: objective.arity(),
        });
    }
    if objective.shapes()[0] != (mu1.len(), mu2.len()) {
        return Err(Error::Shape {
            expected: (mu1.len(), mu2.len()),
            got: objective.shapes()[0],
        });
    }
    if cfg.steps == StepRule::ExactLineSearch && !(objective.is_quadratic() && objective.has_hessian()) {
        return Err(Error::Validation(
            "exact line search needs a quadratic objective".into(),
        ));
    }
    check_plan(x0, mu1, mu2)?;
    objective.check(&[x0])?;
    let manifold = TransportManifold::new(mu1.clone(), mu2.clone())?;
    let report_grad = cfg.steps != StepRule::Fixed;

    let start = Instant::now();
    let mut x = x0.clone();
    let mut trace = Vec::new();
    let grad_norm = |x: &DMatrix<f64>, g: &DMatrix<f64>| -> Option<f64> {
        if !report_grad {
            return None;
        }
        let c = manifold.coupling(x.clone()).ok()?;
        let r = manifold.egrad_to_rgrad(&c, g).ok()?;
        manifold.norm(&c, &r).ok()
    };
    let mut grad = objective.egrad(&[&x]).swap_remove(0);
    trace.push(TraceRecord {
        iter: 0,
        elapsed_sec: start.elapsed().as_secs_f64(),
        cost: objective.cost(&[&x]),
        grad_norm: grad_norm(&x, &grad),
        step_size: None,
    });

    let mut status = Status::IterationCap;
    for t in 0..cfg.max_iter {
        if cfg.max_time.is_some_and(|b| start.elapsed() >= b) {
            status = Status::TimeCap;
            break;
        }
        let target = entropic_lmo(&grad, mu1, mu2, cfg.epsilon, &cfg.sinkhorn)?;
        let step = match cfg.steps {
            StepRule::Fixed => 1.0,
            StepRule::Harmonic => 2.0 / (t as f64 + 2.0),
            StepRule::ExactLineSearch => {
                let dir = &target - &x;
                let slope = grad.dot(&dir);
                let hd = objective.ehess_vec(&[&x], &[&dir]).map(|mut v| v.swap_remove(0));
                let curv = hd.map_or(0.0, |h| h.dot(&dir));
                exact_step(slope, curv)
            }
        };
        let next = if step == 1.0 {
            target
        } else {
            &x + (&target - &x) * step
        };
        let moved = max_abs_diff(&next, &x);
        x = next;
        grad = objective.egrad(&[&x]).swap_remove(0);
        trace.push(TraceRecord {
            iter: t + 1,
            elapsed_sec: start.elapsed().as_secs_f64(),
            cost: objective.cost(&[&x]),
            grad_norm: grad_norm(&x, &grad),
            step_size: report_grad.then_some(step),
        });
        if moved <= cfg.move_tol {
            status = Status::Converged;
            break;
        }
    }
    Ok(SolveResult {
        point: vec![Coupling::from_plan_unchecked(x)],
        trace,
        status,
    })
}

/// Frank-Wolfe with the step fixed at 1, i.e. `x_{t+1} = LMO(grad f(x_t))`.
pub fn fw_fixed_step(
    objective: &dyn Objective,
    mu1: &Marginal,
    mu2: &Marginal,
    x0: &DMatrix<f64>,
    cfg: &FwConfig,
) -> Result<SolveResult> {
    let cfg = FwConfig {
        steps: StepRule::Fixed,
        ..*cfg
    };
    frank_wolfe(objective, mu1, mu2, x0, &cfg)
}

/// Minimizer over `[0, 1]` of `slope * g + curv * g^2 / 2`.
fn exact_step(slope: f64, curv: f64) -> f64 {
    if curv > 0.0 {
        (-slope / curv).clamp(0.0, 1.0)
    } else if slope + 0.5 * curv < 0.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{gw_frobenius, linear_ot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn marg(w: &[f64]) -> Marginal {
        Marginal::new(w.to_vec()).unwrap()
    }

    fn product(a: &Marginal, b: &Marginal) -> DMatrix<f64> {
        a.weights() * b.weights().transpose()
    }

    #[test]
    fn harmonic_linear_is_stationary_after_first_step() {
        let (a, b) = (marg(&[0.3, 0.7]), marg(&[0.5, 0.2, 0.3]));
        let c = DMatrix::from_row_slice(2, 3, &[0.1, 0.9, 0.4, 0.8, 0.2, 0.6]);
        let obj = linear_ot(c.clone()).unwrap();
        let cfg = FwConfig::default();
        let res = frank_wolfe(&obj, &a, &b, &product(&a, &b), &cfg).unwrap();
        let lmo = entropic_lmo(&c, &a, &b, cfg.epsilon, &cfg.sinkhorn).unwrap();
        assert_eq!(res.point[0].plan(), &lmo);
        assert_eq!(res.status, Status::Converged);
        assert_eq!(res.trace[1].step_size, Some(1.0));
        let costs: Vec<f64> = res.trace[1..].iter().map(|t| t.cost).collect();
        assert!(costs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_gradient_gives_product_coupling() {
        let (a, b) = (marg(&[0.3, 0.7]), marg(&[0.5, 0.5]));
        let obj = linear_ot(DMatrix::zeros(2, 2)).unwrap();
        let x0 = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.2, 0.5]);
        let res = fw_fixed_step(&obj, &a, &b, &x0, &FwConfig::default()).unwrap();
        assert!((res.point[0].plan() - product(&a, &b)).amax() < 1e-12);
        assert_eq!(res.status, Status::Converged);
        assert!(res.iterations() <= 2);
    }

    #[test]
    fn fixed_step_linear_converges_in_one_iteration() {
        let (a, b) = (marg(&[0.4, 0.6]), marg(&[0.5, 0.5]));
        let obj = linear_ot(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let res = fw_fixed_step(&obj, &a, &b, &product(&a, &b), &FwConfig::default()).unwrap();
        assert_eq!(res.status, Status::Converged);
        assert_eq!(res.iterations(), 2);
        assert!(res.trace.iter().all(|t| t.grad_norm.is_none() && t.step_size.is_none()));
    }

    #[test]
    fn line_search_on_gw_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>());
            let b = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
            let obj = gw_frobenius((&a + a.transpose()) * 0.5, (&b + b.transpose()) * 0.5).unwrap();
            let (m1, m2) = (Marginal::uniform(5).unwrap(), Marginal::uniform(4).unwrap());
            let cfg = FwConfig {
                steps: StepRule::ExactLineSearch,
                max_iter: 50,
                ..Default::default()
            };
            let res = frank_wolfe(&obj, &m1, &m2, &product(&m1, &m2), &cfg).unwrap();
            for w in res.trace.windows(2) {
                assert!(w[1].cost <= w[0].cost + 1e-15, "{} > {}", w[1].cost, w[0].cost);
            }
            let plan = res.point[0].plan();
            assert!(plan.iter().all(|x| *x > 0.0));
            assert!((plan.column_sum() - m1.weights()).amax() < 1e-8);
        }
    }

    #[test]
    fn fixed_point_satisfies_oracle_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
        let obj = gw_frobenius((&a + a.transpose()) * 0.5, (&a + a.transpose()) * 0.5).unwrap();
        let m = Marginal::uniform(4).unwrap();
        let cfg = FwConfig {
            epsilon: 0.5,
            max_iter: 2000,
            ..Default::default()
        };
        let res = fw_fixed_step(&obj, &m, &m, &product(&m, &m), &cfg).unwrap();
        assert_eq!(res.status, Status::Converged);
        let x = res.point[0].plan();
        let g = obj.egrad(&[x]).swap_remove(0);
        let again = entropic_lmo(&g, &m, &m, cfg.epsilon, &cfg.sinkhorn).unwrap();
        assert!((again - x).amax() <= 1e-9);
    }

    #[test]
    fn rejects_bad_setups() {
        let m = Marginal::uniform(2).unwrap();
        let obj = linear_ot(DMatrix::zeros(2, 2)).unwrap();
        let bad = DMatrix::from_element(2, 2, 0.3);
        assert!(frank_wolfe(&obj, &m, &m, &bad, &FwConfig::default()).is_err());
        let cfg = FwConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(frank_wolfe(&obj, &m, &m, &product(&m, &m), &cfg).is_err());
    }

    #[test]
    fn exact_step_cases() {
        assert_eq!(exact_step(-1.0, 4.0), 0.25);
        assert_eq!(exact_step(-1.0, 0.5), 1.0);
        assert_eq!(exact_step(1.0, 2.0), 0.0);
        assert_eq!(exact_step(-1.0, -1.0), 1.0);
        assert_eq!(exact_step(0.5, -0.5), 0.0);
    }
}

use super::{is_step_rejection, Iterate, Run, SolveResult, SolverConfig, Status};
use crate::error::{Error, Result};
use crate::manifold::{Coupling, TangentVector};
use crate::objectives::{plans, Objective};
use crate::product::{add_scaled, scale, ProductManifold};

/// Riemannian trust-region method with a truncated-CG inner solver.
pub fn solve_rtr(
    manifold: &ProductManifold,
    objective: &dyn Objective,
    x0: &[Coupling],
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if !objective.has_hessian() {
        return Err(Error::Validation(
            "trust-region solver needs an objective with a Hessian".into(),
        ));
    }
    let (mut run, mut it) = Run::start(manifold, objective, x0, cfg)?;
    run.record(0, &it, None);
    let tr = &cfg.trust_region;
    let mut radius = tr.initial_radius;
    let mut rejections = 0;
    let mut iter = 0;
    loop {
        if let Some(status) = run.stop_reason(iter, &it) {
            return Ok(run.finish(it, status));
        }
        let hess = |v: &[TangentVector]| -> Result<Vec<TangentVector>> {
            let dirs: Vec<_> = v.iter().map(|t| t.direction()).collect();
            let eh = objective
                .ehess_vec(&plans(&it.x), &dirs)
                .ok_or_else(|| Error::Validation("objective returned no Hessian".into()))?;
            manifold.ehess_to_rhess(&it.x, &it.egrad, &eh, v)
        };
        let inner = truncated_cg(manifold, &it, radius, cfg, &hess);
        let (eta, boundary, predicted) = match inner {
            Ok(s) => s,
            Err(e) if is_step_rejection(&e) => cauchy_point(manifold, &it, radius, &hess)?,
            Err(e) => return Err(e),
        };

        let candidate = match manifold.retract(&it.x, &eta) {
            Ok(c) => Some(c),
            Err(e) if is_step_rejection(&e) => None,
            Err(e) => return Err(e),
        };
        let (rho, next) = match candidate {
            Some(c) => {
                let cost = objective.cost(&plans(&c));
                let reg = 1e3 * f64::EPSILON * it.cost.abs().max(1.0);
                let rho = (it.cost - cost + reg) / (predicted + reg);
                (if cost.is_finite() { rho } else { f64::NEG_INFINITY }, Some((c, cost)))
            }
            None => (f64::NEG_INFINITY, None),
        };

        if rho < 0.25 {
            radius *= 0.25;
        } else if rho > 0.75 && boundary {
            radius = (2.0 * radius).min(tr.max_radius);
        }

        let accepted = match next {
            Some((c, cost)) if rho > tr.accept_ratio && cost <= it.cost => match run.evaluate(c) {
                Ok(n) => Some(n),
                Err(e) if is_step_rejection(&e) => None,
                Err(e) => return Err(e),
            },
            _ => None,
        };
        match accepted {
            Some(n) => {
                let step = manifold.norm(&it.x, &eta)?;
                iter += 1;
                rejections = 0;
                it = n;
                run.record(iter, &it, Some(step));
            }
            None => {
                rejections += 1;
                if rejections > tr.max_rejections {
                    return Ok(run.finish(it, Status::StepFailure));
                }
            }
        }
    }
}

/// Model decrease `-(g(grad, eta) + g(H eta, eta) / 2)`.
fn model_decrease(
    manifold: &ProductManifold,
    it: &Iterate,
    eta: &[TangentVector],
    h_eta: &[TangentVector],
) -> Result<f64> {
    let lin = manifold.metric(&it.x, &it.grad, eta)?;
    let quad = manifold.metric(&it.x, h_eta, eta)?;
    Ok(-(lin + 0.5 * quad))
}

type Inner = (Vec<TangentVector>, bool, f64);

/// Steihaug-Toint truncated CG on the quadratic model within `radius`.
fn truncated_cg<H>(manifold: &ProductManifold, it: &Iterate, radius: f64, cfg: &SolverConfig, hess: &H) -> Result<Inner>
where
    H: Fn(&[TangentVector]) -> Result<Vec<TangentVector>>,
{
    let tr = &cfg.trust_region;
    let x = &it.x;
    let mut eta = manifold.zero_tangent();
    let mut r = it.grad.clone();
    let mut rr = it.grad_norm * it.grad_norm;
    let r0 = it.grad_norm;
    let target = r0 * r0.powf(tr.theta).min(tr.kappa);
    let mut delta = scale(&r, -1.0);
    let (mut e_e, mut e_d, mut d_d) = (0.0, 0.0, rr);
    let mut boundary = false;
    let max_inner = manifold.dim().max(1);

    for _ in 0..max_inner {
        let hd = hess(&delta)?;
        let d_hd = manifold.metric(x, &delta, &hd)?;
        let alpha = rr / d_hd;
        let e_e_new = e_e + 2.0 * alpha * e_d + alpha * alpha * d_d;
        if !(d_hd > 0.0) || e_e_new >= radius * radius {
            let tau = (-e_d + (e_d * e_d + d_d * (radius * radius - e_e)).max(0.0).sqrt()) / d_d;
            eta = add_scaled(&eta, &delta, tau);
            boundary = true;
            break;
        }
        eta = add_scaled(&eta, &delta, alpha);
        e_e = e_e_new;
        r = manifold.transport(x, &add_scaled(&r, &hd, alpha))?;
        let rr_new = manifold.metric(x, &r, &r)?;
        if rr_new.sqrt() <= target {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        delta = add_scaled(&scale(&r, -1.0), &delta, beta);
        e_d = beta * (e_d + alpha * d_d);
        d_d = rr + beta * beta * d_d;
    }

    let h_eta = hess(&eta)?;
    let predicted = model_decrease(manifold, it, &eta, &h_eta)?;
    if predicted > 0.0 && predicted.is_finite() {
        Ok((eta, boundary, predicted))
    } else {
        cauchy_point(manifold, it, radius, hess)
    }
}

/// Minimizer of the model along `-grad` within the trust region.
fn cauchy_point<H>(manifold: &ProductManifold, it: &Iterate, radius: f64, hess: &H) -> Result<Inner>
where
    H: Fn(&[TangentVector]) -> Result<Vec<TangentVector>>,
{
    let g = it.grad_norm;
    let hg = hess(&it.grad)?;
    let curv = manifold.metric(&it.x, &it.grad, &hg)?;
    let mut tau = radius / g;
    let mut boundary = true;
    if curv > 0.0 {
        let t = g * g / curv;
        if t < tau {
            tau = t;
            boundary = false;
        }
    }
    let eta = scale(&it.grad, -tau);
    let h_eta = scale(&hg, -tau);
    let predicted = model_decrease(manifold, it, &eta, &h_eta)?;
    Ok((eta, boundary, predicted.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{gw_frobenius, robust_max};
    use crate::solvers::testing::{interior_quadratic, rng};
    use nalgebra::DMatrix;
    use rand::Rng;

    #[test]
    fn converges_superlinearly_near_minimizer() {
        let (mf, obj) = interior_quadratic(4, 5);
        let pm = ProductManifold::from(mf);
        let x0 = pm.random_point(&mut rng(7)).unwrap();
        let cfg = SolverConfig {
            grad_tol: 1e-12,
            ..Default::default()
        };
        let res = solve_rtr(&pm, &obj, &x0, &cfg).unwrap();
        assert_eq!(res.status, Status::Converged, "{:?}", res.trace);
        let g: Vec<f64> = res.trace.iter().map(|t| t.grad_norm.unwrap()).collect();
        assert!(g.len() >= 4, "{g:?}");
        for w in g[g.len() - 4..].windows(2) {
            assert!(w[1] <= 0.5 * w[0], "{g:?}");
        }
    }

    #[test]
    fn zero_euclidean_hessian_stays_monotone() {
        let mut r = rng(12);
        let c = DMatrix::from_fn(3, 4, |_, _| r.random::<f64>());
        let obj = crate::objectives::linear_ot(c).unwrap();
        let pm = ProductManifold::from(
            crate::manifold::TransportManifold::from_weights(&[0.2, 0.3, 0.5], &[0.25; 4]).unwrap(),
        );
        let x0 = pm.random_point(&mut r).unwrap();
        let res = solve_rtr(
            &pm,
            &obj,
            &x0,
            &SolverConfig {
                max_iter: 100,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(res.iterations() > 0);
        for w in res.trace.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn gw_no_worse_than_gradient_descent() {
        for seed in 0..5 {
            let mut r = rng(200 + seed);
            let a = DMatrix::from_fn(4, 4, |_, _| r.random::<f64>());
            let b = DMatrix::from_fn(5, 5, |_, _| r.random::<f64>());
            let obj = gw_frobenius((&a + a.transpose()) * 0.5, (&b + b.transpose()) * 0.5).unwrap();
            let pm =
                ProductManifold::from(crate::manifold::TransportManifold::from_weights(&[0.25; 4], &[0.2; 5]).unwrap());
            let x0 = pm.random_point(&mut r).unwrap();
            let cfg = SolverConfig {
                max_iter: 100,
                ..Default::default()
            };
            let tr = solve_rtr(&pm, &obj, &x0, &cfg).unwrap();
            let gd = crate::solvers::solve_rgd(&pm, &obj, &x0, &cfg).unwrap();
            assert!(
                tr.final_cost() <= gd.final_cost() + 1e-8,
                "seed {seed}: {} vs {}",
                tr.final_cost(),
                gd.final_cost()
            );
        }
    }

    #[test]
    fn monotone_on_gw() {
        let mut r = rng(11);
        let a = DMatrix::from_fn(4, 4, |_, _| r.random::<f64>());
        let b = DMatrix::from_fn(5, 5, |_, _| r.random::<f64>());
        let obj = gw_frobenius(&a + a.transpose(), &b + b.transpose()).unwrap();
        let pm =
            ProductManifold::from(crate::manifold::TransportManifold::from_weights(&[0.25; 4], &[0.2; 5]).unwrap());
        let x0 = pm.random_point(&mut r).unwrap();
        let res = solve_rtr(
            &pm,
            &obj,
            &x0,
            &SolverConfig {
                max_iter: 50,
                ..Default::default()
            },
        )
        .unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn rejects_objective_without_hessian() {
        let costs = vec![DMatrix::from_element(2, 2, 1.0), DMatrix::from_element(2, 2, 2.0)];
        let obj = robust_max(costs, 0.0).unwrap();
        let pm = ProductManifold::from(crate::manifold::TransportManifold::from_weights(&[0.5; 2], &[0.5; 2]).unwrap());
        let x0 = pm.product_coupling().unwrap();
        assert!(matches!(
            solve_rtr(&pm, &obj, &x0, &SolverConfig::default()),
            Err(Error::Validation(_))
        ));
    }
}

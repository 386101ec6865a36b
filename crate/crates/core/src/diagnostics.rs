//! Numerical self-checks of the geometry, the derivative conversions and
//! the objective evaluators.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::manifold::{Coupling, TangentVector, TransportManifold};
use crate::marginal::Marginal;
use crate::multipliers::{Gauge, ProjectionConfig};
use crate::objectives::{gw_reference_cost, plans, robust_max, squared_loss, Objective, SquaredDistance};
use crate::product::{add_scaled, scale, ProductManifold};
use crate::sinkhorn::SinkhornConfig;
use crate::solvers::{solve_rcg, solve_rgd, CgVariant, SolverConfig, Status};
use crate::synthetic::{sample_simplex, uniform_matrix, CootProblem, GwProblem, LinearProblem};

/// Sinkhorn settings for derivative checks, where retraction error must sit
/// well below the finite-difference signal.
pub fn tight_sinkhorn() -> SinkhornConfig {
    SinkhornConfig {
        tol: 1e-14,
        max_iter: 100_000,
        log_domain: true,
    }
}

pub const TAYLOR_T_MIN: f64 = 1e-5;
pub const TAYLOR_T_MAX: f64 = 1e-1;
pub const TAYLOR_POINTS: usize = 9;
pub const HESSIAN_FD_STEP: f64 = 1e-5;
const CG_CHECK_MAX_ITER: usize = 20_000;

/// Relative size of the deliberate Hessian error used to exercise the checker.
pub const HESSIAN_FAULT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
}

impl Bound {
    pub fn holds(&self, value: f64) -> bool {
        match *self {
            Bound::AtMost(t) => value <= t,
            Bound::AtLeast(t) => value >= t,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<= {t:e}"),
            Bound::AtLeast(t) => write!(f, ">= {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    /// `None` when the check does not apply at these dimensions.
    pub value: Option<f64>,
    pub bound: Bound,
}

impl CheckOutcome {
    fn measured(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            bound,
        }
    }

    fn skipped(name: impl Into<String>, bound: Bound) -> Self {
        Self {
            name: name.into(),
            value: None,
            bound,
        }
    }

    pub fn passed(&self) -> bool {
        self.value.is_none_or(|v| self.bound.holds(v))
    }

    pub fn skipped_check(&self) -> bool {
        self.value.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Scale the Hessian under test by `1 + HESSIAN_FAULT`.
    pub hessian_fault: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 5,
            seed: 0,
            hessian_fault: false,
        }
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Projection checks on one random point and ambient matrix.
pub fn projection_checks<R: Rng + ?Sized>(mf: &TransportManifold, rng: &mut R) -> Result<Vec<CheckOutcome>> {
    let gamma = mf.random_point(rng)?;
    let (m, n) = mf.shape();
    let z = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let p = mf.project_tangent(&gamma, &z)?;
    let pp = mf.project_tangent(&gamma, p.direction())?;
    let idem = (pp.direction() - p.direction()).amax();
    let tangency = p.sum_residual();

    let normal = TangentVector::from_matrix_unchecked(&z - p.direction());
    let inner = mf.metric(&gamma, &normal, &p)?;
    let orth = rel(inner.abs(), mf.norm(&gamma, &normal)? * mf.norm(&gamma, &p)?);

    let alt = mf.clone().with_projection(ProjectionConfig {
        gauge: match mf.projection.gauge {
            Gauge::PinBeta => Gauge::PinAlpha,
            Gauge::PinAlpha => Gauge::PinBeta,
        },
        ..mf.projection
    });
    let gauge = (alt.project_tangent(&gamma, &z)?.direction() - p.direction()).amax();

    let zero = TangentVector::zeros(m, n);
    let back = mf.retract(&gamma, &zero)?;
    let zero_step = (back.plan() - gamma.plan()).amax();

    Ok(vec![
        CheckOutcome::measured("projection idempotence", idem, Bound::AtMost(1e-10)),
        CheckOutcome::measured("tangency residual", tangency, Bound::AtMost(1e-10)),
        CheckOutcome::measured("normal component orthogonality", orth, Bound::AtMost(1e-10)),
        CheckOutcome::measured("gauge invariance", gauge, Bound::AtMost(1e-12)),
        CheckOutcome::measured("retraction zero step", zero_step, Bound::AtMost(mf.sinkhorn.tol)),
    ])
}

/// Largest `|xi / gamma|` allowed for a check direction. At the longest
/// Taylor step the retraction's exponent stays below 0.1, where its cubic
/// term is still negligible.
const MAX_DIRECTION_RATIO: f64 = 1.0;

/// Random tangent direction `Proj(gamma * Z)` at `x`, `Z` standard normal,
/// with unit Fisher norm. Its ratio `xi / gamma` is `Z` minus row and column
/// shifts, so tiny plan entries do not force a tiny direction. Shortened
/// further if some `|xi / gamma|` exceeds `MAX_DIRECTION_RATIO`.
pub fn check_direction<R: Rng + ?Sized>(
    pm: &ProductManifold,
    x: &[Coupling],
    rng: &mut R,
) -> Result<Vec<TangentVector>> {
    let z: Vec<DMatrix<f64>> = x
        .iter()
        .map(|c| c.plan().map(|g| g * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let xi = pm.project_tangent(x, &z)?;
    let norm = pm.norm(x, &xi)?;
    let xi = scale(&xi, if norm > 0.0 { 1.0 / norm } else { 1.0 });
    let worst = xi
        .iter()
        .zip(x)
        .flat_map(|(t, c)| {
            t.direction()
                .iter()
                .zip(c.plan().iter())
                .filter(|(_, g)| **g > 0.0)
                .map(|(a, g)| (a / g).abs())
        })
        .fold(0.0, f64::max);
    Ok(if worst > MAX_DIRECTION_RATIO {
        scale(&xi, MAX_DIRECTION_RATIO / worst)
    } else {
        xi
    })
}

fn log_spaced(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Log-log slope of `|f(R(x, t xi)) - f(x) - t g(grad, xi)|` over
/// `t` in `[TAYLOR_T_MIN, TAYLOR_T_MAX]`; close to 2 for a correct gradient.
pub fn taylor_slope(pm: &ProductManifold, obj: &dyn Objective, x: &[Coupling], xi: &[TangentVector]) -> Result<f64> {
    let cfg = tight_sinkhorn();
    let f0 = obj.cost(&plans(x));
    let grad = pm.egrad_to_rgrad(x, &obj.egrad(&plans(x)))?;
    let slope = pm.metric(x, &grad, xi)?;
    let ts = log_spaced(TAYLOR_T_MIN, TAYLOR_T_MAX, TAYLOR_POINTS);
    let mut lt = Vec::with_capacity(ts.len());
    let mut lr = Vec::with_capacity(ts.len());
    for &t in &ts {
        let y = pm.retract_with(x, &scale(xi, t), &cfg)?;
        let r = (obj.cost(&plans(&y)) - f0 - t * slope).abs();
        lt.push(t.ln());
        lr.push(r.max(f64::MIN_POSITIVE).ln());
    }
    Ok(fit_slope(&lt, &lr))
}

/// The Riemannian Hessian along `xi`, optionally with the deliberate fault.
pub fn riemannian_hessian(
    pm: &ProductManifold,
    obj: &dyn Objective,
    x: &[Coupling],
    xi: &[TangentVector],
    fault: bool,
) -> Result<Vec<TangentVector>> {
    let p = plans(x);
    let egrad = obj.egrad(&p);
    let dirs: Vec<&DMatrix<f64>> = xi.iter().map(|t| t.direction()).collect();
    let eh = obj
        .ehess_vec(&p, &dirs)
        .ok_or_else(|| crate::error::Error::Validation("objective has no Hessian".into()))?;
    let h = pm.ehess_to_rhess(x, &egrad, &eh, xi)?;
    Ok(if fault { scale(&h, 1.0 + HESSIAN_FAULT) } else { h })
}

/// Relative error between the Hessian and central differences of Riemannian
/// gradients along the retraction curve, corrected by the ambient Fisher
/// connection and projected back to the tangent space at `x`.
pub fn hessian_fd_error(
    pm: &ProductManifold,
    obj: &dyn Objective,
    x: &[Coupling],
    xi: &[TangentVector],
    fault: bool,
) -> Result<f64> {
    let cfg = tight_sinkhorn();
    let t = HESSIAN_FD_STEP;
    let grad_at = |y: &[Coupling]| pm.egrad_to_rgrad(y, &obj.egrad(&plans(y)));
    let plus = pm.retract_with(x, &scale(xi, t), &cfg)?;
    let minus = pm.retract_with(x, &scale(xi, -t), &cfg)?;
    let gp = grad_at(&plus)?;
    let gm = grad_at(&minus)?;
    let g0 = grad_at(x)?;
    let ambient: Vec<DMatrix<f64>> = (0..pm.len())
        .map(|k| {
            let fd = (gp[k].direction() - gm[k].direction()) / (2.0 * t);
            let conn = g0[k]
                .direction()
                .component_mul(xi[k].direction())
                .component_div(x[k].plan())
                * 0.5;
            fd - conn
        })
        .collect();
    let fd = pm.project_tangent(x, &ambient)?;
    let h = riemannian_hessian(pm, obj, x, xi, fault)?;
    let diff = add_scaled(&h, &fd, -1.0);
    Ok(rel(pm.norm(x, &diff)?, pm.norm(x, &fd)?))
}

/// `|g(H xi, eta) - g(xi, H eta)|` relative to `|H xi| |eta| + |xi| |H eta|`.
pub fn hessian_symmetry_error(
    pm: &ProductManifold,
    obj: &dyn Objective,
    x: &[Coupling],
    xi: &[TangentVector],
    eta: &[TangentVector],
    fault: bool,
) -> Result<f64> {
    let hx = riemannian_hessian(pm, obj, x, xi, fault)?;
    let he = riemannian_hessian(pm, obj, x, eta, fault)?;
    let a = pm.metric(x, &hx, eta)?;
    let b = pm.metric(x, xi, &he)?;
    let scale = pm.norm(x, &hx)? * pm.norm(x, eta)? + pm.norm(x, xi)? * pm.norm(x, &he)?;
    Ok(rel((a - b).abs(), scale))
}

/// `|g(grad, xi) - <egrad, xi>|` relative to `|egrad| |xi|` (Frobenius).
pub fn gradient_identity_error(
    pm: &ProductManifold,
    obj: &dyn Objective,
    x: &[Coupling],
    xi: &[TangentVector],
) -> Result<f64> {
    let egrad = obj.egrad(&plans(x));
    let grad = pm.egrad_to_rgrad(x, &egrad)?;
    let lhs = pm.metric(x, &grad, xi)?;
    let rhs: f64 = egrad.iter().zip(xi).map(|(g, t)| g.dot(t.direction())).sum();
    let den: f64 = egrad.iter().zip(xi).map(|(g, t)| g.norm() * t.direction().norm()).sum();
    Ok(rel((lhs - rhs).abs(), den))
}

struct Instance {
    name: &'static str,
    manifold: ProductManifold,
    objective: Box<dyn Objective>,
    hessian: bool,
}

fn instances(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Instance>> {
    let lin = LinearProblem::generate(rng, m, n)?;
    let base = TransportManifold::new(lin.mu1.clone(), lin.mu2.clone())?;
    let gw = GwProblem::generate(rng, m, n)?;
    let coot = CootProblem::generate(rng, m, n, 3, 2)?;
    let costs: Vec<DMatrix<f64>> = (0..3).map(|_| uniform_matrix(rng, m, n)).collect();
    Ok(vec![
        Instance {
            name: "linear",
            manifold: ProductManifold::from(base.clone()),
            objective: Box::new(lin.objective()?),
            hessian: true,
        },
        Instance {
            name: "gw_frobenius",
            manifold: ProductManifold::from(TransportManifold::new(gw.mu1.clone(), gw.mu2.clone())?),
            objective: Box::new(gw.objective()?),
            hessian: true,
        },
        Instance {
            name: "coot_square",
            manifold: ProductManifold::new(vec![
                TransportManifold::new(coot.mu1.clone(), coot.mu2.clone())?,
                TransportManifold::new(coot.nu1.clone(), coot.nu2.clone())?,
            ])?,
            objective: Box::new(coot.objective()?),
            hessian: true,
        },
        Instance {
            name: "robust_max",
            manifold: ProductManifold::from(base),
            objective: Box::new(robust_max(costs, 0.1)?),
            hessian: true,
        },
    ])
}

/// Gradient, Hessian and oracle checks for all objectives at one point each.
fn derivative_checks(m: usize, n: usize, fault: bool, rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for mut inst in instances(m, n, rng)? {
        // Points balanced only to the default tolerance would put a constant
        // offset under the finite-difference signal.
        for c in inst.manifold.components_mut() {
            c.sinkhorn = tight_sinkhorn();
        }
        let pm = &inst.manifold;
        let obj = inst.objective.as_ref();
        let x = pm.random_point(rng)?;
        let xi = check_direction(pm, &x, rng)?;
        let eta = check_direction(pm, &x, rng)?;
        out.push(CheckOutcome::measured(
            format!("{} gradient identity", inst.name),
            gradient_identity_error(pm, obj, &x, &xi)?,
            Bound::AtMost(1e-10),
        ));
        out.push(CheckOutcome::measured(
            format!("{} taylor slope", inst.name),
            taylor_slope(pm, obj, &x, &xi)?,
            Bound::AtLeast(1.9),
        ));
        if inst.hessian {
            out.push(CheckOutcome::measured(
                format!("{} hessian vs finite differences", inst.name),
                hessian_fd_error(pm, obj, &x, &xi, fault)?,
                Bound::AtMost(1e-4),
            ));
            out.push(CheckOutcome::measured(
                format!("{} hessian self-adjointness", inst.name),
                hessian_symmetry_error(pm, obj, &x, &xi, &eta, fault)?,
                Bound::AtMost(1e-8),
            ));
        }
    }
    Ok(out)
}

/// Fast evaluators against quadruple loops on random plans.
fn oracle_checks(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let gw = GwProblem::generate(rng, m, n)?;
    let g = random_plan(rng, m, n);
    let fast = gw
        .objective()?
        .squared_loss_cost(&g, &g.column_sum(), &g.row_sum().transpose());
    let slow = gw_reference_cost(&g, &gw.s1, &gw.s2, squared_loss)?;
    let coot = CootProblem::generate(rng, m, n, 3, 2)?;
    let obj = coot.objective()?;
    let (g1, g2) = (random_plan(rng, m, n), random_plan(rng, 3, 2));
    let fast_c = obj.sample_cost_matrix(&g2).dot(&g1);
    let slow_c = obj.reference_cost(&g1, &g2)?;
    Ok(vec![
        CheckOutcome::measured("gw fast form vs loops", (fast - slow).abs(), Bound::AtMost(1e-10)),
        CheckOutcome::measured("coot fast form vs loops", (fast_c - slow_c).abs(), Bound::AtMost(1e-10)),
    ])
}

/// Product of simplex samples; any nonnegative plan works for the oracles.
fn random_plan(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let a = sample_simplex(rng, m).expect("positive dims");
    let b = sample_simplex(rng, n).expect("positive dims");
    let noise = uniform_matrix(rng, m, n);
    let p = (a.weights() * b.weights().transpose()).component_mul(&noise.add_scalar(0.5));
    &p / p.sum()
}

/// Conjugate gradients must not need more iterations than steepest descent
/// on `|gamma - mu1 mu2'|^2` with uniform marginals. Meaningless on a
/// one-dimensional tangent space, where every method follows the same line.
fn cg_variant_check(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let name = "cg variants vs steepest descent";
    let bound = Bound::AtMost(0.0);
    if (m - 1) * (n - 1) <= 1 {
        return Ok(CheckOutcome::skipped(name, bound));
    }
    let mf = TransportManifold::new(Marginal::uniform(m)?, Marginal::uniform(n)?)?;
    let target = mf.product_coupling()?;
    let obj = SquaredDistance::new(target.into_plan())?;
    let pm = ProductManifold::from(mf);
    let x0 = pm.random_point(rng)?;
    let cfg = SolverConfig {
        max_iter: CG_CHECK_MAX_ITER,
        ..Default::default()
    };
    let gd = solve_rgd(&pm, &obj, &x0, &cfg)?;
    let mut excess = if gd.status == Status::Converged {
        0.0
    } else {
        f64::INFINITY
    };
    for variant in [CgVariant::HestenesStiefel, CgVariant::FletcherReeves] {
        let res = solve_rcg(
            &pm,
            &obj,
            &x0,
            &SolverConfig {
                cg_variant: variant,
                ..cfg
            },
        )?;
        if res.status != Status::Converged {
            excess = f64::INFINITY;
        }
        excess = excess.max(res.iterations() as f64 - gd.iterations() as f64);
    }
    Ok(CheckOutcome::measured(name, excess.max(0.0), bound))
}

/// The full battery at one dimension pair and seed.
pub fn run_checks(opts: &CheckOptions) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (m, n) = (opts.rows, opts.cols);
    let mu1 = sample_simplex(&mut rng, m)?;
    let mu2 = sample_simplex(&mut rng, n)?;
    let mf = TransportManifold::new(mu1, mu2)?;
    let mut out = projection_checks(&mf, &mut rng)?;
    out.extend(derivative_checks(m, n, opts.hessian_fault, &mut rng)?);
    out.extend(oracle_checks(m, n, &mut rng)?);
    out.push(cg_variant_check(m, n, &mut rng)?);
    Ok(out)
}

fn block(m: &DMatrix<f64>, r0: usize, c0: usize, r: usize, c: usize) -> DMatrix<f64> {
    m.view((r0, c0), (r, c)).clone_owned()
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Largest discrepancy between the geometry of a block-diagonal masked
/// manifold and the same operations run on each block as its own manifold.
///
/// Block `k` carries mass `w_k`; with `gamma_k = w_k * hat_k` the standalone
/// counterparts are: projection unchanged, retraction `w_k R(hat_k, xi_k / w_k)`,
/// gradient `w_k grad(hat_k)`, Hessian with the Euclidean Hessian term scaled
/// by `w_k`, and metric `sum_k g(hat_k) / w_k`. Off-block entries must be
/// exactly zero and count toward the returned error otherwise.
pub fn block_decomposition_error<R: Rng + ?Sized>(blocks: &[(usize, usize)], rng: &mut R) -> Result<f64> {
    let mask = crate::mask::SupportMask::block_diagonal(blocks)?;
    let (m, n) = mask.shape();
    let weights = sample_simplex(rng, blocks.len())?;
    let mut parts = Vec::with_capacity(blocks.len());
    let (mut mu1, mut mu2) = (Vec::with_capacity(m), Vec::with_capacity(n));
    for (&(r, c), &w) in blocks.iter().zip(weights.as_slice()) {
        let a = sample_simplex(rng, r)?;
        let b = sample_simplex(rng, c)?;
        mu1.extend(a.as_slice().iter().map(|x| w * x));
        mu2.extend(b.as_slice().iter().map(|x| w * x));
        parts.push(TransportManifold::new(a, b)?.with_sinkhorn(tight_sinkhorn()));
    }
    let full = TransportManifold::masked(Marginal::new(mu1)?, Marginal::new(mu2)?, mask.clone())?
        .with_sinkhorn(tight_sinkhorn());

    let gamma = full.random_point(rng)?;
    let z = gaussian(rng, m, n);
    let xi = full.random_tangent(&gamma, rng)?;
    let eta = full.random_tangent(&gamma, rng)?;
    let worst_ratio = xi
        .direction()
        .iter()
        .zip(gamma.plan().iter())
        .map(|(a, b)| (a / b).abs())
        .fold(0.0, f64::max);
    let xi = xi.scaled(1.0 / worst_ratio.max(1.0));
    let egrad = gaussian(rng, m, n);
    let ehess = gaussian(rng, m, n);

    let proj = full.project_tangent(&gamma, &z)?;
    let ret = full.retract(&gamma, &xi)?;
    let grad = full.egrad_to_rgrad(&gamma, &egrad)?;
    let hess = full.ehess_to_rhess(&gamma, &egrad, &ehess, &xi)?;
    let metric = full.metric(&gamma, &xi, &eta)?;

    let mut err: f64 = 0.0;
    for out in [
        gamma.plan(),
        proj.direction(),
        ret.plan(),
        grad.direction(),
        hess.direction(),
    ] {
        for j in 0..n {
            for i in 0..m {
                if !mask.is_allowed(i, j) {
                    err = err.max(out[(i, j)].abs());
                }
            }
        }
    }

    let mut metric_sum = 0.0;
    let (mut r0, mut c0) = (0, 0);
    for ((&(r, c), &w), mf) in blocks.iter().zip(weights.as_slice()).zip(&parts) {
        let b = |x: &DMatrix<f64>| block(x, r0, c0, r, c);
        let hat = mf.coupling(b(gamma.plan()) / w)?;
        let xi_b = mf.tangent(b(xi.direction()))?;
        let eta_b = mf.tangent(b(eta.direction()))?;

        let p = mf.project_tangent(&hat, &b(&z))?;
        err = err.max((b(proj.direction()) - p.direction()).amax());
        let rr = mf.retract(&hat, &xi_b.scaled(1.0 / w))?;
        err = err.max((b(ret.plan()) - rr.plan() * w).amax());
        let g = mf.egrad_to_rgrad(&hat, &b(&egrad))?;
        err = err.max((b(grad.direction()) - g.direction() * w).amax());
        let h = mf.ehess_to_rhess(&hat, &b(&egrad), &(b(&ehess) * w), &xi_b)?;
        err = err.max((b(hess.direction()) - h.direction()).amax());
        metric_sum += mf.metric(&hat, &xi_b, &eta_b)? / w;
        r0 += r;
        c0 += c;
    }
    err = err.max(rel((metric - metric_sum).abs(), metric.abs().max(1.0)));
    Ok(err)
}

fn same_bits(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Whether a one-component product reproduces every operation of `base`
/// bit for bit, including seeded random generation.
pub fn product_single_component_identical(base: &TransportManifold, seed: u64) -> Result<bool> {
    let pm = ProductManifold::from(base.clone());
    let (m, n) = base.shape();
    let mut ra = ChaCha8Rng::seed_from_u64(seed);
    let mut rb = ra.clone();
    let x = base.random_point(&mut ra)?;
    let px = pm.random_point(&mut rb)?;
    let mut ok = same_bits(x.plan(), px[0].plan());
    let xi = base.random_tangent(&x, &mut ra)?;
    let pxi = pm.random_tangent(&px, &mut rb)?;
    let eta = base.random_tangent(&x, &mut ra)?;
    let peta = pm.random_tangent(&px, &mut rb)?;
    ok &= same_bits(xi.direction(), pxi[0].direction()) && same_bits(eta.direction(), peta[0].direction());

    let z = gaussian(&mut ra, m, n);
    let e = gaussian(&mut ra, m, n);
    ok &= base.metric(&x, &xi, &eta)?.to_bits() == pm.metric(&px, &pxi, &peta)?.to_bits();
    ok &= base.norm(&x, &xi)?.to_bits() == pm.norm(&px, &pxi)?.to_bits();
    ok &= same_bits(
        base.project_tangent(&x, &z)?.direction(),
        pm.project_tangent(&px, std::slice::from_ref(&z))?[0].direction(),
    );
    let worst = xi
        .direction()
        .iter()
        .zip(x.plan().iter())
        .filter(|(_, g)| **g > 0.0)
        .map(|(a, g)| (a / g).abs())
        .fold(0.0, f64::max);
    let small = xi.scaled(1.0 / worst.max(1.0));
    ok &= same_bits(
        base.retract(&x, &small)?.plan(),
        pm.retract(&px, std::slice::from_ref(&small))?[0].plan(),
    );
    ok &= same_bits(
        base.egrad_to_rgrad(&x, &z)?.direction(),
        pm.egrad_to_rgrad(&px, std::slice::from_ref(&z))?[0].direction(),
    );
    ok &= same_bits(
        base.ehess_to_rhess(&x, &z, &e, &xi)?.direction(),
        pm.ehess_to_rhess(&px, std::slice::from_ref(&z), std::slice::from_ref(&e), &pxi)?[0].direction(),
    );
    ok &= same_bits(
        base.project_tangent(&x, &z)?.direction(),
        pm.transport(
            &px,
            std::slice::from_ref(&TangentVector::from_matrix_unchecked(z.clone())),
        )?[0]
            .direction(),
    );
    ok &= same_bits(base.product_coupling()?.plan(), pm.product_coupling()?[0].plan());
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_battery_passes() {
        let out = run_checks(&CheckOptions::default()).unwrap();
        for c in &out {
            assert!(c.passed(), "{c:?}");
        }
        assert!(out.iter().all(|c| !c.skipped_check()));
    }

    #[test]
    fn hessian_fault_is_detected() {
        let out = run_checks(&CheckOptions {
            hessian_fault: true,
            ..Default::default()
        })
        .unwrap();
        let failed: Vec<_> = out.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
        assert!(!failed.is_empty());
        assert!(
            failed.iter().all(|n| n.contains("hessian vs finite differences")),
            "{failed:?}"
        );
    }

    #[test]
    fn two_by_two_skips_cg_check() {
        let out = run_checks(&CheckOptions {
            rows: 2,
            cols: 2,
            ..Default::default()
        })
        .unwrap();
        for c in &out {
            assert!(c.passed(), "{c:?}");
        }
        let skipped: Vec<_> = out.iter().filter(|c| c.skipped_check()).collect();
        assert_eq!(skipped.len(), 1);
        assert!(skipped[0].name.starts_with("cg"));
    }

    #[test]
    fn block_geometry_decomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for blocks in [[(2, 2), (2, 2)], [(1, 1), (3, 3)], [(3, 3), (1, 1)]] {
            let err = block_decomposition_error(&blocks, &mut rng).unwrap();
            assert!(err <= 1e-10, "{blocks:?}: {err:e}");
        }
    }

    #[test]
    fn single_component_product_is_bitwise_identical() {
        let mf = TransportManifold::from_weights(&[0.1, 0.2, 0.3, 0.4], &[0.5, 0.25, 0.25]).unwrap();
        assert!(product_single_component_identical(&mf, 3).unwrap());
    }

    #[test]
    fn slope_fit_recovers_power() {
        let xs: Vec<f64> = (1..6).map(|i| (i as f64).ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        assert!((fit_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}

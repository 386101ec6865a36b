//! Lagrange multipliers of the tangent projection.
//!
//! Projecting `Z` onto the tangent space at `gamma` needs `(alpha, beta)` with
//!
//! ```text
//! alpha .* mu1 + gamma  beta  = Z 1
//! beta  .* mu2 + gamma' alpha = Z' 1
//! ```
//!
//! The system has a one-dimensional kernel `(c, -c)` per connected component
//! of the support graph. We fix the gauge by pinning one multiplier per
//! component, eliminate the other block, and run Jacobi-preconditioned CG on
//! the resulting Schur complement. Every CG iteration is two matrix-vector
//! products with `gamma`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which multiplier block carries the pinned (zeroed) entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gauge {
    /// Pin one entry of `beta` per component and solve for `beta`.
    #[default]
    PinBeta,
    /// Pin one entry of `alpha` per component and solve for `alpha`.
    PinAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Relative 2-norm residual target of the Schur system.
    pub tol: f64,
    pub max_iter: usize,
    pub gauge: Gauge,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 1000,
            gauge: Gauge::PinBeta,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Multipliers {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

/// Indices held at zero: the last row and last column of every component.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Pins {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Pins {
    pub fn from_components(row_comp: &[usize], col_comp: &[usize]) -> Self {
        let last = |labels: &[usize]| {
            let count = labels.iter().copied().max().map_or(0, |c| c + 1);
            let mut out = vec![usize::MAX; count];
            for (idx, &c) in labels.iter().enumerate() {
                out[c] = idx;
            }
            out.retain(|x| *x != usize::MAX);
            out.sort_unstable();
            out
        };
        Self {
            rows: last(row_comp),
            cols: last(col_comp),
        }
    }
}

pub(crate) fn solve(
    gamma: &DMatrix<f64>,
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    row_rhs: &DVector<f64>,
    col_rhs: &DVector<f64>,
    pins: &Pins,
    cfg: &ProjectionConfig,
) -> Result<Multipliers> {
    match cfg.gauge {
        Gauge::PinBeta => {
            let (alpha, beta) = eliminated_solve(gamma, false, mu1, mu2, row_rhs, col_rhs, &pins.cols, cfg)?;
            Ok(Multipliers { alpha, beta })
        }
        Gauge::PinAlpha => {
            let (beta, alpha) = eliminated_solve(gamma, true, mu2, mu1, col_rhs, row_rhs, &pins.rows, cfg)?;
            Ok(Multipliers { alpha, beta })
        }
    }
}

/// Solves `[D_e  G; G' D_k] [e; k] = [r_e; r_k]` with `G = gamma` (or its
/// transpose) by eliminating `e`. Returns `(e, k)`.
#[allow(clippy::too_many_arguments)]
fn eliminated_solve(
    gamma: &DMatrix<f64>,
    transposed: bool,
    d_elim: &DVector<f64>,
    d_kept: &DVector<f64>,
    rhs_elim: &DVector<f64>,
    rhs_kept: &DVector<f64>,
    pinned: &[usize],
    cfg: &ProjectionConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let g_mul = |x: &DVector<f64>| if transposed { gamma.tr_mul(x) } else { gamma * x };
    let gt_mul = |x: &DVector<f64>| if transposed { gamma * x } else { gamma.tr_mul(x) };
    let free = {
        let mut f = vec![true; d_kept.len()];
        for &p in pinned {
            f[p] = false;
        }
        f
    };
    let restrict = |v: &mut DVector<f64>| {
        for (x, keep) in v.iter_mut().zip(&free) {
            if !keep {
                *x = 0.0;
            }
        }
    };
    let schur = |x: &DVector<f64>| {
        let mut y = d_kept.component_mul(x) - gt_mul(&g_mul(x).component_div(d_elim));
        restrict(&mut y);
        y
    };

    // Jacobi preconditioner: diag(S)_k = d_k - sum_e G_ek^2 / d_e.
    let mut diag = d_kept.clone();
    for (e, de) in d_elim.iter().enumerate() {
        for k in 0..d_kept.len() {
            let g = if transposed { gamma[(k, e)] } else { gamma[(e, k)] };
            diag[k] -= g * g / de;
        }
    }
    let precond = diag.map(|d| if d > 0.0 { 1.0 / d } else { 1.0 });

    let mut b = rhs_kept - gt_mul(&rhs_elim.component_div(d_elim));
    restrict(&mut b);
    let b_norm = b.norm();
    // Rounding level of the Schur product at `x`; residuals below it carry
    // no information, so they count as converged.
    let abs_gamma = gamma.abs();
    let floor = |x: &DVector<f64>| {
        let ax = x.abs();
        let inner = if transposed {
            abs_gamma.tr_mul(&ax)
        } else {
            &abs_gamma * &ax
        };
        let outer = inner.component_div(d_elim);
        let back = if transposed {
            &abs_gamma * &outer
        } else {
            abs_gamma.tr_mul(&outer)
        };
        ROUNDING_FACTOR * f64::EPSILON * (d_kept.component_mul(&ax) + back).norm()
    };
    let mut x = DVector::zeros(d_kept.len());
    if b_norm > 0.0 {
        let target = cfg.tol * b_norm;
        let mut iterations = 0;
        let mut r = b.clone();
        let mut residual = b_norm;
        let mut last_restart = f64::INFINITY;
        'outer: while iterations < cfg.max_iter {
            let mut z = r.component_mul(&precond);
            let mut p = z.clone();
            let mut rz = r.dot(&z);
            while iterations < cfg.max_iter {
                iterations += 1;
                let sp = schur(&p);
                let curvature = p.dot(&sp);
                if !(curvature > 0.0) {
                    break;
                }
                let step = rz / curvature;
                x.axpy(step, &p, 1.0);
                r.axpy(-step, &sp, 1.0);
                if r.norm() <= target {
                    break;
                }
                z = r.component_mul(&precond);
                let rz_next = r.dot(&z);
                p = &z + (rz_next / rz) * &p;
                rz = rz_next;
            }
            // Recheck against the true residual; restart if recursion drifted.
            r = &b - schur(&x);
            residual = r.norm();
            if residual <= target.max(floor(&x)) || residual.is_nan() {
                break 'outer;
            }
            if residual > 0.5 * last_restart {
                break;
            }
            last_restart = residual;
        }
        if !(residual <= target.max(floor(&x))) && free.iter().filter(|f| **f).count() <= DENSE_LIMIT {
            if let Some(y) = dense_solve(&schur, &b, &free, &x) {
                let ry = (&b - schur(&y)).norm();
                if ry < residual || residual.is_nan() {
                    x = y;
                    residual = ry;
                }
            }
        }
        if !(residual <= target.max(floor(&x))) {
            return Err(Error::Convergence {
                what: "tangent projection solve",
                iterations,
                residual: residual / b_norm,
            });
        }
    }
    let elim = (rhs_elim - g_mul(&x)).component_div(d_elim);
    Ok((elim, x))
}

/// Multiple of machine epsilon times the Schur product magnitude below
/// which a residual is treated as rounding noise.
const ROUNDING_FACTOR: f64 = 64.0;

/// Largest free block solved densely when CG stalls.
const DENSE_LIMIT: usize = 2000;

/// Dense LU solve of the free block of the operator `schur`, followed by two
/// rounds of iterative refinement. Starts from `x0` so a partial CG solution
/// is only refined.
fn dense_solve<F>(schur: &F, b: &DVector<f64>, free: &[bool], x0: &DVector<f64>) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let idx: Vec<usize> = (0..free.len()).filter(|&k| free[k]).collect();
    let k = idx.len();
    let mut dense = DMatrix::zeros(k, k);
    let mut unit = DVector::zeros(free.len());
    for (c, &j) in idx.iter().enumerate() {
        unit[j] = 1.0;
        let col = schur(&unit);
        unit[j] = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            dense[(r, c)] = col[i];
        }
    }
    let lu = dense.lu();
    let mut x = x0.clone();
    for _ in 0..3 {
        let r = b - schur(&x);
        let rf = DVector::from_iterator(k, idx.iter().map(|&i| r[i]));
        let d = lu.solve(&rf)?;
        for (r, &i) in idx.iter().enumerate() {
            x[i] += d[r];
        }
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pins_pick_last_index_per_component() {
        let pins = Pins::from_components(&[0, 0, 1, 1], &[1, 0, 0, 1]);
        assert_eq!(pins.rows, vec![1, 3]);
        assert_eq!(pins.cols, vec![2, 3]);
    }

    #[test]
    fn uniform_two_by_two_hand_solution() {
        // gamma = 0.25, Z = [[0, .25], [.25, 0]]: rhs rows = cols = 0.25.
        let gamma = DMatrix::from_element(2, 2, 0.25);
        let mu = DVector::from_element(2, 0.5);
        let rhs = DVector::from_element(2, 0.25);
        let pins = Pins {
            rows: vec![1],
            cols: vec![1],
        };
        let sol = solve(&gamma, &mu, &mu, &rhs, &rhs, &pins, &ProjectionConfig::default()).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-14 && (sol.alpha[1] - 0.5).abs() < 1e-14);
        assert!(sol.beta.norm() < 1e-14);
    }

    #[test]
    fn dense_fallback_after_iteration_cap() {
        let gamma = DMatrix::from_fn(3, 4, |i, j| 0.05 + 0.01 * (i * 4 + j) as f64);
        let mu1 = DVector::from_iterator(3, gamma.row_iter().map(|r| r.sum()));
        let mu2 = DVector::from_iterator(4, gamma.column_iter().map(|c| c.sum()));
        let rows = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let cols = DVector::from_vec(vec![0.3, 0.2, -1.0, 0.0]);
        let pins = Pins {
            rows: vec![2],
            cols: vec![3],
        };
        let cfg = ProjectionConfig {
            max_iter: 1,
            ..Default::default()
        };
        let sol = solve(&gamma, &mu1, &mu2, &rows, &cols, &pins, &cfg).unwrap();
        let r1 = sol.alpha.component_mul(&mu1) + &gamma * &sol.beta - &rows;
        let r2 = sol.beta.component_mul(&mu2) + gamma.tr_mul(&sol.alpha) - &cols;
        assert!(r1.amax() < 1e-13, "{r1}");
        assert!(r2.amax() < 1e-13, "{r2}");
    }
}

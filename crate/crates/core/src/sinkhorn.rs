//! Diagonal matrix scaling to prescribed marginals.
//!
//! Both the retraction and the entropic linear minimization oracle reduce to
//! finding `diag(u) K diag(v)` with row sums `mu1` and column sums `mu2`.
//! The log-domain variant works on `log K` directly, so kernels whose entries
//! span hundreds of orders of magnitude (or are exactly zero off a support
//! pattern, encoded as `-inf`) are handled without underflow.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::marginal::Marginal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Threshold on the infinity-norm of both marginal residuals.
    pub tol: f64,
    pub max_iter: usize,
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            log_domain: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Validation(format!(
                "sinkhorn config needs tol > 0 and max_iter >= 1 (got {}, {})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Output of a successful scaling.
#[derive(Debug, Clone)]
pub struct Scaling {
    pub plan: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Infinity-norm distance of the row and column sums of `plan` to the marginals.
pub fn marginal_residual(plan: &DMatrix<f64>, mu1: &Marginal, mu2: &Marginal) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in plan.row_iter().enumerate() {
        worst = worst.max((row.sum() - mu1.as_slice()[i]).abs());
    }
    for (j, col) in plan.column_iter().enumerate() {
        worst = worst.max((col.sum() - mu2.as_slice()[j]).abs());
    }
    worst
}

fn check_dims(rows: usize, cols: usize, mu1: &Marginal, mu2: &Marginal) -> Result<()> {
    if rows != mu1.len() || cols != mu2.len() {
        return Err(Error::Shape {
            expected: (mu1.len(), mu2.len()),
            got: (rows, cols),
        });
    }
    Ok(())
}

/// Scales a nonnegative kernel. Zero entries are allowed as long as no row or
/// column is entirely zero; they stay zero in the output.
pub fn sinkhorn_scale(kernel: &DMatrix<f64>, mu1: &Marginal, mu2: &Marginal, cfg: &SinkhornConfig) -> Result<Scaling> {
    cfg.validate()?;
    check_dims(kernel.nrows(), kernel.ncols(), mu1, mu2)?;
    if let Some((idx, v)) = kernel.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        let (row, col) = (idx % kernel.nrows(), idx / kernel.nrows());
        return Err(Error::Validation(format!(
            "kernel entry ({row}, {col}) is {v}, must be finite and >= 0"
        )));
    }
    check_structure(kernel.nrows(), kernel.ncols(), |i, j| kernel[(i, j)] > 0.0)?;
    if cfg.log_domain {
        let log_kernel = kernel.map(f64::ln);
        scale_log_unchecked(&log_kernel, mu1, mu2, cfg)
    } else {
        scale_linear_unchecked(kernel, mu1, mu2, cfg)
    }
}

/// Scales `exp(log_kernel)` in the log domain. `-inf` entries encode exact zeros.
pub fn sinkhorn_scale_log(
    log_kernel: &DMatrix<f64>,
    mu1: &Marginal,
    mu2: &Marginal,
    cfg: &SinkhornConfig,
) -> Result<Scaling> {
    cfg.validate()?;
    check_dims(log_kernel.nrows(), log_kernel.ncols(), mu1, mu2)?;
    if let Some(v) = log_kernel.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
        return Err(Error::Validation(format!("log-kernel entry {v} is not allowed")));
    }
    check_structure(log_kernel.nrows(), log_kernel.ncols(), |i, j| {
        log_kernel[(i, j)] > f64::NEG_INFINITY
    })?;
    scale_log_unchecked(log_kernel, mu1, mu2, cfg)
}

fn check_structure(rows: usize, cols: usize, positive: impl Fn(usize, usize) -> bool) -> Result<()> {
    for i in 0..rows {
        if !(0..cols).any(|j| positive(i, j)) {
            return Err(Error::Structural { axis: "row", index: i });
        }
    }
    for j in 0..cols {
        if !(0..rows).any(|i| positive(i, j)) {
            return Err(Error::Structural {
                axis: "column",
                index: j,
            });
        }
    }
    Ok(())
}

fn scale_linear_unchecked(
    kernel: &DMatrix<f64>,
    mu1: &Marginal,
    mu2: &Marginal,
    cfg: &SinkhornConfig,
) -> Result<Scaling> {
    let a = mu1.weights();
    let b = mu2.weights();
    let mut v = DVector::from_element(kernel.ncols(), 1.0);
    let mut u;
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        let kv = kernel * &v;
        u = a.component_div(&kv);
        let ktu = kernel.tr_mul(&u);
        v = b.component_div(&ktu);
        if !(u.iter().chain(v.iter()).all(|x| x.is_finite() && *x > 0.0)) {
            return Err(Error::Convergence {
                what: "linear-domain sinkhorn (scaling under/overflow)",
                iterations: iter,
                residual,
            });
        }
        // Columns are exact after the v-update; only rows can be off.
        let plan = DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| u[i] * kernel[(i, j)] * v[j]);
        residual = marginal_residual(&plan, mu1, mu2);
        if residual <= cfg.tol {
            return Ok(Scaling {
                plan,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        what: "sinkhorn",
        iterations: cfg.max_iter,
        residual,
    })
}

/// `log(sum(exp(x)))`, returning `-inf` for an all-`-inf` input.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn scale_log_unchecked(
    log_kernel: &DMatrix<f64>,
    mu1: &Marginal,
    mu2: &Marginal,
    cfg: &SinkhornConfig,
) -> Result<Scaling> {
    let (m, n) = log_kernel.shape();
    let log_a: Vec<f64> = mu1.as_slice().iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = mu2.as_slice().iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        for i in 0..m {
            f[i] = log_a[i] - log_sum_exp((0..n).map(|j| log_kernel[(i, j)] + g[j]));
        }
        for j in 0..n {
            g[j] = log_b[j] - log_sum_exp((0..m).map(|i| log_kernel[(i, j)] + f[i]));
        }
        let plan = DMatrix::from_fn(m, n, |i, j| (log_kernel[(i, j)] + f[i] + g[j]).exp());
        residual = marginal_residual(&plan, mu1, mu2);
        if !residual.is_finite() {
            break;
        }
        if residual <= cfg.tol {
            return Ok(Scaling {
                plan,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        what: "sinkhorn",
        iterations: cfg.max_iter,
        residual,
    })
}

/// Entropic linear minimization oracle over the transport polytope:
/// `argmin <P, G> + eps * sum P log P`, i.e. the scaling of `exp(-G / eps)`.
///
/// The `-1` from differentiating `P log P` only rescales the kernel by a
/// constant, which the diagonal scaling absorbs, so it is dropped.
pub fn entropic_lmo(
    gradient: &DMatrix<f64>,
    mu1: &Marginal,
    mu2: &Marginal,
    epsilon: f64,
    cfg: &SinkhornConfig,
) -> Result<DMatrix<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Validation(format!("epsilon must be > 0, got {epsilon}")));
    }
    if gradient.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("LMO gradient has non-finite entries".into()));
    }
    check_dims(gradient.nrows(), gradient.ncols(), mu1, mu2)?;
    let mut log_kernel = gradient.map(|x| -x / epsilon);
    let shift = log_kernel.max();
    log_kernel.apply(|x| *x -= shift);
    if !cfg.log_domain {
        let kernel = log_kernel.map(f64::exp);
        if kernel.iter().all(|x| *x > 0.0) {
            match scale_linear_unchecked(&kernel, mu1, mu2, cfg) {
                Ok(s) => return Ok(s.plan),
                Err(Error::Convergence { what, .. }) if what.starts_with("linear-domain") => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(scale_log_unchecked(&log_kernel, mu1, mu2, cfg)?.plan)
}

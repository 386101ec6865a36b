//! Riemannian optimization for non-linear optimal transport.
//!
//! The search space is the set of strictly positive couplings with prescribed
//! marginals, equipped with the Fisher information metric. [`manifold`] holds
//! the geometry (projection, Sinkhorn retraction, gradient and Hessian
//! conversion), [`objectives`] the transport costs, [`solvers`] the
//! Riemannian drivers, and [`baselines`] the Frank-Wolfe style comparisons.

// NaN must fail these guards, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod manifold;
pub mod marginal;
pub mod mask;
pub mod multipliers;
pub mod objectives;
pub mod product;
pub mod sinkhorn;
pub mod solvers;
pub mod synthetic;

pub use error::{Error, Result};
pub use manifold::{Coupling, TangentVector, TransportManifold};
pub use marginal::Marginal;
pub use mask::{total_support_check, SupportMask, TotalSupport};
pub use multipliers::{Gauge, ProjectionConfig};
pub use objectives::Objective;
pub use product::ProductManifold;
pub use sinkhorn::{entropic_lmo, sinkhorn_scale, sinkhorn_scale_log, SinkhornConfig};

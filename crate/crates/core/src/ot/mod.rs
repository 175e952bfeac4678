//! Linear optimal transport: exact network simplex and KL-regularized scaling.

mod coupling;
mod network_simplex;
mod sinkhorn;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use coupling::{Coupling, MARGINAL_TOL};
pub use network_simplex::MASS_QUANTUM;
pub use sinkhorn::{sinkhorn_log, Prior, SinkhornOutput};

pub(crate) use coupling::max_abs_diff;

use crate::error::{Error, Result};

/// Inner solver family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OtMethod {
    /// Exact Kantorovich solve; returns a vertex of the transport polytope.
    ExactFlow,
    /// Entropic regularization against `ξ ⊗ υ`.
    Sinkhorn,
    /// Entropic regularization against the previous plan (proximal step).
    KlProx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtOptions {
    pub method: OtMethod,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop threshold on the L1 marginal violation.
    pub tol: f64,
    /// Return the last scaling iterate instead of failing on non-convergence.
    pub allow_unconverged: bool,
}

impl Default for OtOptions {
    fn default() -> Self {
        OtOptions {
            method: OtMethod::ExactFlow,
            epsilon: 1e-2,
            max_iter: 10_000,
            tol: 1e-8,
            allow_unconverged: false,
        }
    }
}

impl OtOptions {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn sinkhorn(epsilon: f64) -> Self {
        OtOptions { method: OtMethod::Sinkhorn, epsilon, ..Self::default() }
    }

    pub fn kl_prox(epsilon: f64) -> Self {
        OtOptions { method: OtMethod::KlProx, epsilon, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method != OtMethod::ExactFlow && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "entropic solvers need epsilon > 0, got {}",
                self.epsilon
            )));
        }
        if self.method != OtMethod::ExactFlow && !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn is_entropic(&self) -> bool {
        self.method != OtMethod::ExactFlow
    }

    /// Dispatches on `method`. `prior` is only read by [`OtMethod::KlProx`].
    pub fn solve(
        &self,
        cost: ArrayView2<f64>,
        xi: ArrayView1<f64>,
        upsilon: ArrayView1<f64>,
        prior: &Coupling,
    ) -> Result<Coupling> {
        match self.method {
            OtMethod::ExactFlow => solve_exact(cost, xi, upsilon),
            OtMethod::Sinkhorn => {
                check_problem(cost, xi, upsilon)?;
                sinkhorn_log(
                    cost,
                    xi,
                    upsilon,
                    Prior::Product,
                    self.epsilon,
                    self.max_iter,
                    self.tol,
                    self.allow_unconverged,
                )
                .map(|o| o.plan)
            }
            OtMethod::KlProx => {
                check_problem(cost, xi, upsilon)?;
                sinkhorn_log(
                    cost,
                    xi,
                    upsilon,
                    Prior::Plan(prior),
                    self.epsilon,
                    self.max_iter,
                    self.tol,
                    self.allow_unconverged,
                )
                .map(|o| o.plan)
            }
        }
    }
}

fn check_problem(cost: ArrayView2<f64>, xi: ArrayView1<f64>, upsilon: ArrayView1<f64>) -> Result<()> {
    let (n, m) = cost.dim();
    if xi.len() != n || upsilon.len() != m {
        return Err(Error::InvalidInput(format!(
            "cost is {n}x{m} but marginals have lengths {} and {}",
            xi.len(),
            upsilon.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cost has non-finite entries".into()));
    }
    if xi.iter().chain(upsilon.iter()).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("marginals must be finite and nonnegative".into()));
    }
    let (sa, sb) = (xi.sum(), upsilon.sum());
    if (sa - sb).abs() > MARGINAL_TOL {
        return Err(Error::MarginalMismatch(format!(
            "marginal masses differ: {sa} vs {sb}"
        )));
    }
    Ok(())
}

/// Exact minimizer of `⟨cost, π⟩` over `Π(ξ, υ)`.
///
/// The result is a vertex of the transport polytope, so its support has at
/// most `n + m - 1` cells.
pub fn solve_exact(cost: ArrayView2<f64>, xi: ArrayView1<f64>, upsilon: ArrayView1<f64>) -> Result<Coupling> {
    check_problem(cost, xi, upsilon)?;
    let (n, m) = cost.dim();
    let basis = network_simplex::transport_simplex(cost, xi, upsilon)?;
    log::trace!("network simplex {n}x{m}: {} pivots", basis.pivots);
    Coupling::from_entries(n, m, basis.entries)
}

/// Entropic plan minimizing `⟨cost, π⟩ + ε KL(π | ξ ⊗ υ)`.
pub fn solve_sinkhorn(
    cost: ArrayView2<f64>,
    xi: ArrayView1<f64>,
    upsilon: ArrayView1<f64>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Coupling> {
    check_problem(cost, xi, upsilon)?;
    sinkhorn_log(cost, xi, upsilon, Prior::Product, epsilon, max_iter, tol, false).map(|o| o.plan)
}

/// Proximal plan minimizing `⟨cost, π⟩ + ε KL(π | prior)`.
pub fn solve_kl_prox(
    cost: ArrayView2<f64>,
    xi: ArrayView1<f64>,
    upsilon: ArrayView1<f64>,
    prior: &Coupling,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Coupling> {
    check_problem(cost, xi, upsilon)?;
    sinkhorn_log(cost, xi, upsilon, Prior::Plan(prior), epsilon, max_iter, tol, false).map(|o| o.plan)
}

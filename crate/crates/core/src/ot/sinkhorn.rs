//! Log-domain Sinkhorn scaling for KL-regularized transport.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use super::coupling::Coupling;
use crate::error::{Error, Result};

/// Reference measure of the KL regularizer.
#[derive(Clone, Copy, Debug)]
pub enum Prior<'a> {
    /// `ξ ⊗ υ`.
    Product,
    /// A given plan; the solution stays inside its support.
    Plan(&'a Coupling),
}

/// Plan plus convergence trace of one Sinkhorn run.
#[derive(Clone, Debug)]
pub struct SinkhornOutput {
    pub plan: Coupling,
    pub iterations: usize,
    pub converged: bool,
    /// L1 row-marginal violation after each column update.
    pub violation_history: Vec<f64>,
}

const PAR_MIN: usize = 1 << 14;
const SCALE_MAX: f64 = 1e100;
const SCALE_MIN: f64 = 1e-100;

/// `out[i, j] = exp(kernel[i, j] + p[i] + q[j])`.
fn absorb(kernel: &Array2<f64>, p: &[f64], q: &[f64], out: &mut Array2<f64>) {
    let work = |(i, mut row): (usize, ndarray::ArrayViewMut1<f64>)| {
        let src = kernel.row(i);
        for ((o, k), qj) in row.iter_mut().zip(src.iter()).zip(q) {
            *o = if p[i] == f64::NEG_INFINITY || *qj == f64::NEG_INFINITY { 0.0 } else { (k + p[i] + qj).exp() };
        }
    };
    if kernel.len() >= PAR_MIN {
        let rows: Vec<_> = out.outer_iter_mut().enumerate().collect();
        rows.into_par_iter().for_each(work);
    } else {
        out.outer_iter_mut().enumerate().for_each(work);
    }
}

fn mat_vec(k: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    let work = |(i, o): (usize, &mut f64)| {
        *o = k.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
    };
    if k.len() >= PAR_MIN {
        out.par_iter_mut().enumerate().for_each(work);
    } else {
        out.iter_mut().enumerate().for_each(work);
    }
}

/// `scaled[i] = LSE_j (kernel[i, j] + pot[j])` for every row of `kernel`.
fn row_lse(kernel: &Array2<f64>, pot: &[f64], out: &mut [f64]) {
    let work = |(i, o): (usize, &mut f64)| {
        let row = kernel.row(i);
        let mut max = f64::NEG_INFINITY;
        for (k, p) in row.iter().zip(pot) {
            max = max.max(k + p);
        }
        if max == f64::NEG_INFINITY {
            *o = max;
            return;
        }
        let mut s = 0.0;
        for (k, p) in row.iter().zip(pot) {
            s += (k + p - max).exp();
        }
        *o = max + s.ln();
    };
    if kernel.len() >= PAR_MIN {
        out.par_iter_mut().enumerate().for_each(work);
    } else {
        out.iter_mut().enumerate().for_each(work);
    }
}

/// Minimizes `⟨C, π⟩ + ε KL(π | prior)` over couplings of `xi` and `upsilon`.
///
/// Stops when the L1 row violation drops below `tol` (columns are exact after
/// every sweep). With `allow_unconverged` the last iterate is returned
/// instead of an error when `max_iter` is exhausted.
#[allow(clippy::too_many_arguments)]
pub fn sinkhorn_log(
    cost: ArrayView2<f64>,
    xi: ArrayView1<f64>,
    upsilon: ArrayView1<f64>,
    prior: Prior<'_>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    allow_unconverged: bool,
) -> Result<SinkhornOutput> {
    let (n, m) = cost.dim();
    if xi.len() != n || upsilon.len() != m {
        return Err(Error::InvalidInput(format!(
            "cost is {n}x{m} but marginals have lengths {} and {}",
            xi.len(),
            upsilon.len()
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let log_xi: Vec<f64> = xi.iter().map(|v| v.ln()).collect();
    let log_up: Vec<f64> = upsilon.iter().map(|v| v.ln()).collect();

    // kernel[i, j] = log prior(i, j) - C(i, j) / ε
    let mut kernel = Array2::from_elem((n, m), f64::NEG_INFINITY);
    match prior {
        Prior::Product => {
            for i in 0..n {
                for j in 0..m {
                    kernel[[i, j]] = log_xi[i] + log_up[j] - cost[[i, j]] / epsilon;
                }
            }
        }
        Prior::Plan(p) => {
            if p.shape() != (n, m) {
                return Err(Error::InvalidInput(format!(
                    "prior plan is {:?}, cost is {n}x{m}",
                    p.shape()
                )));
            }
            for &(i, j, mass) in p.entries() {
                kernel[[i, j]] = mass.ln() - cost[[i, j]] / epsilon;
            }
        }
    }
    if kernel.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidInput("cost has non-finite entries".into()));
    }
    let kernel_t = kernel.t().as_standard_layout().into_owned();

    // Potentials f, g are kept in the log domain; the loop itself works on
    // scalings a, b against K = exp(kernel + f ⊕ g) and folds them back into
    // f, g whenever they leave a safe range or a row or column underflows.
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut lse_r = vec![0.0; n];
    let mut lse_c = vec![0.0; m];
    let mut k = Array2::zeros((n, m));
    let mut k_t = Array2::zeros((m, n));
    let mut a = vec![1.0f64; n];
    let mut b = vec![1.0f64; m];
    let mut kb = vec![0.0; n];
    let mut kta = vec![0.0; m];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut fresh = true;

    for it in 0..max_iter {
        iterations = it + 1;
        if fresh {
            // One full log-domain sweep, then exponentiate.
            for j in 0..m {
                g[j] += b[j].ln();
            }
            row_lse(&kernel, &g, &mut lse_r);
            for i in 0..n {
                if xi[i] > 0.0 && lse_r[i] == f64::NEG_INFINITY {
                    return Err(Error::Numerical(format!("row {i} of the plan underflowed; increase epsilon")));
                }
                f[i] = if xi[i] > 0.0 { log_xi[i] - lse_r[i] } else { f64::NEG_INFINITY };
            }
            row_lse(&kernel_t, &f, &mut lse_c);
            for j in 0..m {
                if upsilon[j] > 0.0 && lse_c[j] == f64::NEG_INFINITY {
                    return Err(Error::Numerical(format!(
                        "column {j} of the plan underflowed; increase epsilon"
                    )));
                }
                g[j] = if upsilon[j] > 0.0 { log_up[j] - lse_c[j] } else { f64::NEG_INFINITY };
            }
            absorb(&kernel, &f, &g, &mut k);
            absorb(&kernel_t, &g, &f, &mut k_t);
            a.fill(1.0);
            b.fill(1.0);
            fresh = false;
        } else {
            mat_vec(&k, &b, &mut kb);
            let mut bad = false;
            for i in 0..n {
                a[i] = if xi[i] > 0.0 { xi[i] / kb[i] } else { 0.0 };
                bad |= !a[i].is_finite();
            }
            mat_vec(&k_t, &a, &mut kta);
            for j in 0..m {
                b[j] = if upsilon[j] > 0.0 { upsilon[j] / kta[j] } else { 0.0 };
                bad |= !b[j].is_finite();
            }
            if bad {
                // A row or column underflowed: redo the sweep in the log
                // domain from the last absorbed potentials.
                b.fill(1.0);
                fresh = true;
                continue;
            }
        }
        mat_vec(&k, &b, &mut kb);
        let mut viol = 0.0;
        for i in 0..n {
            let row = a[i] * kb[i];
            if xi[i] > 0.0 && !(row > 0.0) {
                return Err(Error::Numerical(format!("row {i} of the plan underflowed; increase epsilon")));
            }
            viol += (row - xi[i]).abs();
        }
        if !viol.is_finite() {
            return Err(Error::Numerical("non-finite marginal violation".into()));
        }
        history.push(viol);
        if viol < tol {
            converged = true;
            break;
        }
        let out_of_range = |v: &f64| *v != 0.0 && !(SCALE_MIN..=SCALE_MAX).contains(v);
        if a.iter().any(out_of_range) || b.iter().any(out_of_range) {
            for i in 0..n {
                if a[i] > 0.0 {
                    f[i] += a[i].ln();
                }
            }
            for j in 0..m {
                if b[j] > 0.0 {
                    g[j] += b[j].ln();
                }
            }
            absorb(&kernel, &f, &g, &mut k);
            absorb(&kernel_t, &g, &f, &mut k_t);
            a.fill(1.0);
            b.fill(1.0);
        }
    }
    if !converged && !allow_unconverged {
        return Err(Error::NotConverged {
            iterations,
            violation: history.last().copied().unwrap_or(f64::INFINITY),
        });
    }

    let mut entries = Vec::new();
    for i in 0..n {
        if xi[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            let mass = a[i] * k[[i, j]] * b[j];
            if mass > 0.0 {
                entries.push((i, j, mass));
            }
        }
    }
    let plan = Coupling::from_entries(n, m, entries)?;
    Ok(SinkhornOutput { plan, iterations, converged, violation_history: history })
}

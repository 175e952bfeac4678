//! Mean gauges, the multi-marginal GW functional, the barycenter loss and
//! the tangential fixpoint iteration.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::{glue_nw, max_rule_without_replacement, melt, MultiCoupling};
use crate::gmspace::{GaugeKind, GmSpace, WEIGHT_SUM_TOL};
use crate::gw::{brute_force_gw, gw_squared, solve_gw, GwInit, GwOptions, GwResult, GW_MARGINAL_TOL};
use crate::ot::Coupling;

/// How plans to the current reference are combined into a melting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlueRule {
    NwCorner,
    MaxRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop as soon as the loss increases and keep the state before it.
    LossIncrease,
    /// Stop when the relative loss change drops below the threshold.
    RelTol(f64),
    /// Run exactly this many outer iterations.
    FixedIters(usize),
}

/// Solver used for every GW step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSolver {
    /// Block-coordinate descent configured by [`BaryOptions::gw`].
    #[default]
    Bcd,
    /// Exhaustive search over permutations (small uniform spaces only).
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaryOptions {
    pub glue_rule: GlueRule,
    pub gw: GwOptions,
    pub max_outer: usize,
    pub stop: StopRule,
    pub step: StepSolver,
}

impl Default for BaryOptions {
    fn default() -> Self {
        BaryOptions {
            glue_rule: GlueRule::NwCorner,
            gw: GwOptions::default(),
            max_outer: 50,
            stop: StopRule::LossIncrease,
            step: StepSolver::Bcd,
        }
    }
}

/// Why [`iterate`] returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Two inputs with the first one as reference: one step is optimal.
    SingleStep,
    LossIncreased,
    Converged,
    FixedIters,
    /// The melting did not change.
    Fixpoint,
    MaxOuter,
}

/// Snapshot handed to observers after every outer iteration.
#[derive(Debug)]
pub struct IterationReport<'a> {
    pub iteration: usize,
    pub loss: f64,
    pub melting: &'a MultiCoupling,
    pub space: &'a GmSpace,
}

#[derive(Clone, Debug)]
pub struct BarycenterState {
    pub inputs: Vec<GmSpace>,
    pub melting: MultiCoupling,
    pub rho: Array1<f64>,
    /// `(iteration, loss)` after every outer iteration, including a final
    /// increase that triggered [`StopRule::LossIncrease`].
    pub loss_history: Vec<(usize, f64)>,
    /// Plans `π_i` between the reference and `X_i` used by the last melting.
    pub plans: Vec<Coupling>,
    /// The mean-gauge space on the melting.
    pub space: GmSpace,
    pub stop_reason: StopReason,
}

impl BarycenterState {
    /// Loss of the reported state.
    pub fn loss(&self) -> Option<f64> {
        match self.stop_reason {
            StopReason::LossIncreased if self.loss_history.len() >= 2 => {
                Some(self.loss_history[self.loss_history.len() - 2].1)
            }
            _ => self.loss_history.last().map(|e| e.1),
        }
    }

    /// The barycenter for other weights `ρ'`, from the same melting.
    pub fn reweigh(&self, rho: ArrayView1<f64>) -> Result<GmSpace> {
        mean_gauge(&self.inputs, &self.melting, rho)
    }
}

/// Checks that `rho` is a point of the probability simplex of dimension `n - 1`.
pub fn check_rho(rho: ArrayView1<f64>, n: usize) -> Result<()> {
    if rho.len() != n {
        return Err(Error::InvalidInput(format!("rho has {} entries for {n} inputs", rho.len())));
    }
    if rho.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidInput("rho entries must be nonnegative".into()));
    }
    let s = rho.sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidInput(format!("rho sums to {s}, expected 1")));
    }
    Ok(())
}

fn check_melting(inputs: &[GmSpace], mu: &MultiCoupling, tol: f64) -> Result<()> {
    if mu.n_marginals() != inputs.len() {
        return Err(Error::InvalidInput(format!(
            "melting has {} marginals for {} inputs",
            mu.n_marginals(),
            inputs.len()
        )));
    }
    let w: Vec<_> = inputs.iter().map(|s| s.weights().view()).collect();
    mu.check_marginals(&w, tol)
}

/// The space `(supp μ, Σ_i ρ_i g_i, μ)`.
pub fn mean_gauge(inputs: &[GmSpace], mu: &MultiCoupling, rho: ArrayView1<f64>) -> Result<GmSpace> {
    check_rho(rho, inputs.len())?;
    check_melting(inputs, mu, GW_MARGINAL_TOL)?;
    let s = mu.len();
    let row = |a: usize| -> Vec<f64> {
        let ta = mu.tuple(a);
        (0..s)
            .map(|b| {
                let tb = mu.tuple(b);
                let mut v = 0.0;
                for (i, x) in inputs.iter().enumerate() {
                    if rho[i] != 0.0 {
                        v += rho[i] * x.gauge()[[ta[i], tb[i]]];
                    }
                }
                v
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> = if s >= 256 {
        (0..s).into_par_iter().map(row).collect()
    } else {
        (0..s).map(row).collect()
    };
    let gauge = Array2::from_shape_vec((s, s), rows.concat()).expect("square gauge");
    let weights = Array1::from(mu.masses().to_vec());
    let kinds: Vec<GaugeKind> = inputs.iter().map(|x| x.kind()).collect();
    let kind = if kinds.iter().all(|&k| k == kinds[0]) { kinds[0] } else { GaugeKind::Custom };
    Ok(GmSpace::from_raw(gauge, weights, kind).with_label("barycenter"))
}

/// `½ ΣΣ ρ_i ρ_j |g_i − g_j|²` integrated against `μ ⊗ μ`, evaluated as
/// `Σ ρ_i |g_i − m_ρ|²` per pair of support tuples.
pub fn mgw_functional(inputs: &[GmSpace], rho: ArrayView1<f64>, mu: &MultiCoupling) -> Result<f64> {
    check_rho(rho, inputs.len())?;
    check_melting(inputs, mu, GW_MARGINAL_TOL)?;
    let s = mu.len();
    let n = inputs.len();
    let row = |a: usize| -> f64 {
        let ta = mu.tuple(a);
        let mut vals = vec![0.0; n];
        let mut acc = 0.0;
        for b in 0..s {
            let tb = mu.tuple(b);
            let mut mean = 0.0;
            for i in 0..n {
                vals[i] = inputs[i].gauge()[[ta[i], tb[i]]];
                mean += rho[i] * vals[i];
            }
            let mut dev = 0.0;
            for i in 0..n {
                let d = vals[i] - mean;
                dev += rho[i] * d * d;
            }
            acc += mu.mass(b) * dev;
        }
        mu.mass(a) * acc
    };
    let parts: Vec<f64> = if s >= 256 {
        (0..s).into_par_iter().map(row).collect()
    } else {
        (0..s).map(row).collect()
    };
    Ok(parts.iter().sum())
}

fn run_step(y: &GmSpace, x: &GmSpace, opts: &BaryOptions, start: Option<Coupling>) -> Result<GwResult> {
    match opts.step {
        StepSolver::Exhaustive => brute_force_gw(y, x),
        StepSolver::Bcd if opts.gw.inner.is_entropic() => {
            // An entropic step started on a sparse plan cannot leave its
            // support, so solve from the configured start and keep the warm
            // plan only as a candidate.
            let run = solve_gw(y, x, &opts.gw)?;
            match start {
                Some(p) => {
                    let v = gw_squared(y, x, &p).sqrt();
                    if v < run.value {
                        Ok(GwResult { plan: p, value: v, iterations: run.iterations, converged: run.converged, history: run.history })
                    } else {
                        Ok(run)
                    }
                }
                None => Ok(run),
            }
        }
        StepSolver::Bcd => {
            let mut o = opts.gw.clone();
            if let Some(p) = start {
                o.init = GwInit::Given(p);
            }
            solve_gw(y, x, &o)
        }
    }
}

/// `Σ ρ_i GW²(X_i, Y)` with every GW value computed by [`solve_gw`]; an upper
/// bound on the true loss.
pub fn gwb_loss(inputs: &[GmSpace], rho: ArrayView1<f64>, y: &GmSpace, gw_opts: &GwOptions) -> Result<f64> {
    check_rho(rho, inputs.len())?;
    let values: Vec<f64> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| solve_gw(y, x, gw_opts).map(|r| r.value).map_err(|e| e.context(format!("input {i}"))))
        .collect::<Result<_>>()?;
    Ok(values.iter().zip(rho.iter()).map(|(v, r)| r * v * v).sum())
}

/// `(P_{X_×}, P_{X_i})_# μ` as a plan between the support of `μ` and `X_i`.
pub fn melting_plan(mu: &MultiCoupling, axis: usize) -> Result<Coupling> {
    if axis >= mu.n_marginals() {
        return Err(Error::InvalidInput(format!("axis {axis} out of range")));
    }
    let entries = mu.iter().enumerate().map(|(s, (t, m))| (s, t[axis], m)).collect();
    Coupling::from_entries(mu.len(), mu.sizes()[axis], entries)
}

/// GW steps from `y` to every input, warm-started from the melting when given.
fn gw_steps(
    inputs: &[GmSpace],
    y: &GmSpace,
    warm: Option<&MultiCoupling>,
    opts: &BaryOptions,
    iteration: usize,
) -> Result<Vec<GwResult>> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let start = warm.map(|mu| melting_plan(mu, i)).transpose()?;
            run_step(y, x, opts, start)
                .map_err(|e| e.context(format!("GW step to input {i} at outer iteration {iteration}")))
        })
        .collect()
}

fn glue_step(plans: &[Coupling], y: &GmSpace, rule: GlueRule) -> Result<MultiCoupling> {
    match rule {
        GlueRule::NwCorner => Ok(melt(&glue_nw(plans)?)),
        GlueRule::MaxRule => Ok(max_rule_without_replacement(plans, y.weights().view())?.1),
    }
}

/// One gluing-melting step: glues plans `π_i ∈ Π(Y, X_i)`, melts the gluing
/// and returns the melting with its mean-gauge space.
pub fn tangent_step(
    inputs: &[GmSpace],
    rho: ArrayView1<f64>,
    y: &GmSpace,
    plans: &[Coupling],
    rule: GlueRule,
) -> Result<(MultiCoupling, GmSpace)> {
    if plans.len() != inputs.len() {
        return Err(Error::InvalidInput(format!("{} plans for {} inputs", plans.len(), inputs.len())));
    }
    for (i, (p, x)) in plans.iter().zip(inputs).enumerate() {
        p.check_marginals(y.weights().view(), x.weights().view(), GW_MARGINAL_TOL)
            .map_err(|e| e.context(format!("plan {i}")))?;
    }
    let mu = glue_step(plans, y, rule)?;
    let space = mean_gauge(inputs, &mu, rho)?;
    Ok((mu, space))
}

fn check_iterate_inputs(inputs: &[GmSpace], rho: ArrayView1<f64>, init: &GmSpace, opts: &BaryOptions) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("at least one input space is required".into()));
    }
    check_rho(rho, inputs.len())?;
    for (i, s) in inputs.iter().chain(std::iter::once(init)).enumerate() {
        let report = s.validate();
        if !report.is_empty() {
            let what = if i < inputs.len() { format!("input {i}") } else { "initial space".into() };
            return Err(Error::InvalidInput(format!("{what}: {}", report.join("; "))));
        }
    }
    if opts.max_outer == 0 {
        return Err(Error::InvalidInput("max_outer must be at least 1".into()));
    }
    if let StopRule::FixedIters(0) = opts.stop {
        return Err(Error::InvalidInput("a fixed iteration count must be at least 1".into()));
    }
    opts.gw.validate()?;
    if opts.gw.inner.is_entropic() && opts.glue_rule == GlueRule::NwCorner && inputs.len() >= 3 {
        return Err(Error::Precondition(
            "entropic GW steps with three or more inputs need the max rule; dense plans make north-west gluings explode"
                .into(),
        ));
    }
    if opts.glue_rule == GlueRule::MaxRule {
        let m = init.len();
        for (i, s) in inputs.iter().chain(std::iter::once(init)).enumerate() {
            if s.len() != m || !s.is_uniform(1e-12) {
                let what = if i < inputs.len() { format!("input {i}") } else { "initial space".into() };
                return Err(Error::Precondition(format!(
                    "the max rule needs uniform spaces of equal size {m}; {what} has size {} or non-uniform weights",
                    s.len()
                )));
            }
        }
    }
    Ok(())
}

/// Runs the tangential fixpoint iteration from `init`.
pub fn iterate(inputs: &[GmSpace], rho: ArrayView1<f64>, init: &GmSpace, opts: &BaryOptions) -> Result<BarycenterState> {
    iterate_observed(inputs, rho, init, opts, |_| {})
}

/// [`iterate`] with a callback after every outer iteration.
pub fn iterate_observed(
    inputs: &[GmSpace],
    rho: ArrayView1<f64>,
    init: &GmSpace,
    opts: &BaryOptions,
    mut observer: impl FnMut(&IterationReport<'_>),
) -> Result<BarycenterState> {
    check_iterate_inputs(inputs, rho, init, opts)?;
    let n = inputs.len();
    let starts_at_first = init.same_measure_space(&inputs[0]);

    // First GW step: from the configured initialization, except that the
    // reference coinciding with X_1 is coupled to it by the identity.
    let first: Vec<GwResult> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            if i == 0 && starts_at_first {
                let plan = Coupling::identity(x.weights().view());
                return Ok(GwResult { plan, value: 0.0, iterations: 0, converged: true, history: Vec::new() });
            }
            run_step(init, x, opts, None).map_err(|e| e.context(format!("GW step to input {i} at outer iteration 1")))
        })
        .collect::<Result<_>>()?;
    let mut plans: Vec<Coupling> = first.into_iter().map(|r| r.plan).collect();
    let mut y = init.clone();

    let mut history: Vec<(usize, f64)> = Vec::new();
    let mut current: Option<(MultiCoupling, GmSpace, Vec<Coupling>)> = None;
    let mut reason = StopReason::MaxOuter;
    for k in 1..=opts.max_outer {
        let mu = glue_step(&plans, &y, opts.glue_rule).map_err(|e| e.context(format!("gluing at outer iteration {k}")))?;
        let next = mean_gauge(inputs, &mu, rho)?;
        // Plans for the loss double as the next GW step.
        let steps = gw_steps(inputs, &next, Some(&mu), opts, k + 1)?;
        let loss: f64 = steps.iter().zip(rho.iter()).map(|(r, w)| w * r.value * r.value).sum();
        log::info!("outer iteration {k}: loss {loss:.6e}, support {}", mu.len());
        observer(&IterationReport { iteration: k, loss, melting: &mu, space: &next });
        let prev_loss = history.last().map(|e| e.1);
        history.push((k, loss));

        if let (StopRule::LossIncrease, Some(p)) = (opts.stop, prev_loss) {
            if loss > p {
                reason = StopReason::LossIncreased;
                break;
            }
        }
        let unchanged = current.as_ref().is_some_and(|(m, _, _)| *m == mu);
        let used = std::mem::replace(&mut plans, steps.into_iter().map(|r| r.plan).collect());
        y = next.clone();
        current = Some((mu, next, used));

        if n == 2 && starts_at_first && k == 1 {
            reason = StopReason::SingleStep;
            break;
        }
        match opts.stop {
            StopRule::FixedIters(t) if k >= t => {
                reason = StopReason::FixedIters;
                break;
            }
            StopRule::FixedIters(_) => {}
            StopRule::RelTol(tol) => {
                if let Some(p) = prev_loss {
                    if (p - loss).abs() <= tol * p.abs().max(f64::MIN_POSITIVE) {
                        reason = StopReason::Converged;
                        break;
                    }
                }
            }
            StopRule::LossIncrease => {}
        }
        if unchanged && !matches!(opts.stop, StopRule::FixedIters(_)) {
            reason = StopReason::Fixpoint;
            break;
        }
    }
    let (melting, space, plans) = match current {
        Some(c) => c,
        None => {
            // Only reachable when the very first loss already counts as an
            // increase, which cannot happen; keep the first melting anyway.
            let mu = glue_step(&plans, &y, opts.glue_rule)?;
            let sp = mean_gauge(inputs, &mu, rho)?;
            (mu, sp, plans)
        }
    };
    Ok(BarycenterState {
        inputs: inputs.to_vec(),
        melting,
        rho: rho.to_owned(),
        loss_history: history,
        plans,
        space,
        stop_reason: reason,
    })
}

/// Pairwise GW functional at the bi-marginal projections of a melting.
pub fn lgw_matrix(inputs: &[GmSpace], mu: &MultiCoupling) -> Result<Array2<f64>> {
    check_melting(inputs, mu, GW_MARGINAL_TOL)?;
    let n = inputs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| mu.bimarginal(i, j).map(|p| gw_squared(&inputs[i], &inputs[j], &p).sqrt()))
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((n, n));
    for (&(i, j), v) in pairs.iter().zip(vals) {
        out[[i, j]] = v;
        out[[j, i]] = v;
    }
    Ok(out)
}

/// Evenly spaced points of the simplex `Δ_{n-1}` with the given resolution,
/// e.g. `n = 2, steps = 6` gives `(1, 0), (5/6, 1/6), …, (0, 1)`.
pub fn simplex_grid(n: usize, steps: usize, interior_only: bool) -> Vec<Array1<f64>> {
    fn rec(n: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(n - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return Vec::new();
    }
    if steps == 0 {
        return if n == 1 { vec![Array1::from_elem(1, 1.0)] } else { Vec::new() };
    }
    let mut raw = Vec::new();
    rec(n, steps, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .filter(|c| !interior_only || c.iter().all(|&k| k > 0))
        .map(|c| c.iter().map(|&k| k as f64 / steps as f64).collect())
        .collect()
}

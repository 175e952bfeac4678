//! The GW functional, its local linearization, and bi-marginal GW solvers.

use std::cmp::Ordering;
use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gluing::{compose_nw, nw_corner_ordered};
use crate::gmspace::GmSpace;
use crate::ot::{Coupling, OtOptions};

/// Marginal tolerance accepted by [`gw_functional`]; loose enough for
/// converged entropic plans.
pub const GW_MARGINAL_TOL: f64 = 1e-8;

/// Largest support handled by [`brute_force_gw`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Starting plan of the block-coordinate descent.
#[derive(Clone, Debug, PartialEq)]
pub enum GwInit {
    Product,
    Identity,
    Given(Coupling),
    /// A random vertex of the transport polytope.
    Random(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GwOptions {
    pub inner: OtOptions,
    pub outer_max_iter: usize,
    /// Relative change of the descent objective that declares convergence.
    pub outer_tol: f64,
    pub init: GwInit,
    /// Additional runs from random vertices; the best plan is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GwOptions {
    fn default() -> Self {
        GwOptions {
            inner: OtOptions::default(),
            outer_max_iter: 200,
            outer_tol: 1e-9,
            init: GwInit::Product,
            restarts: 0,
            seed: 0,
        }
    }
}

impl GwOptions {
    pub fn with_init(mut self, init: GwInit) -> Self {
        self.init = init;
        self
    }

    pub fn with_inner(mut self, inner: OtOptions) -> Self {
        self.inner = inner;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_max_iter == 0 {
            return Err(Error::InvalidInput("outer_max_iter must be at least 1".into()));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(Error::InvalidInput("outer_tol must be nonnegative".into()));
        }
        self.inner.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GwResult {
    pub plan: Coupling,
    /// `F_GW` at `plan` (square root of the quadratic objective).
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Bilinear objective `⟨C(π_k), π_{k+1}⟩` after every outer step. With an
    /// exact inner solver this sequence is non-increasing.
    pub history: Vec<f64>,
}

fn check_plan(x: &GmSpace, y: &GmSpace, plan: &Coupling, tol: f64) -> Result<()> {
    plan.check_marginals(x.weights().view(), y.weights().view(), tol)
}

/// `F_GW(π) = (ΣΣ |g(x,x') − h(y,y')|² dπ dπ)^{1/2}`.
pub fn gw_functional(x: &GmSpace, y: &GmSpace, plan: &Coupling) -> Result<f64> {
    check_plan(x, y, plan, GW_MARGINAL_TOL)?;
    Ok(gw_squared(x, y, plan).sqrt())
}

/// The squared functional without marginal checks.
///
/// Arguments are put in a canonical order first so that swapping the spaces
/// and transposing the plan reproduces the value bit for bit.
pub fn gw_squared(x: &GmSpace, y: &GmSpace, plan: &Coupling) -> f64 {
    if canonical_order(x, y, plan) == Ordering::Greater {
        let t = plan.transpose();
        gw_squared_oriented(y.gauge().view(), x.gauge().view(), &t)
    } else {
        gw_squared_oriented(x.gauge().view(), y.gauge().view(), plan)
    }
}

fn cmp_f64s<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> Ordering {
    for (u, v) in a.zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

fn canonical_order(x: &GmSpace, y: &GmSpace, plan: &Coupling) -> Ordering {
    x.len()
        .cmp(&y.len())
        .then_with(|| cmp_f64s(x.gauge().iter(), y.gauge().iter()))
        .then_with(|| cmp_f64s(x.weights().iter(), y.weights().iter()))
        .then_with(|| {
            let t = plan.transpose();
            let a = plan.entries().iter();
            let b = t.entries().iter();
            for (p, q) in a.zip(b) {
                let o = (p.0, p.1).cmp(&(q.0, q.1)).then(p.2.total_cmp(&q.2));
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        })
}

fn gw_squared_oriented(g: ArrayView2<f64>, h: ArrayView2<f64>, plan: &Coupling) -> f64 {
    let (n, m) = plan.shape();
    let s = plan.support_size();
    if (s as f64).powi(2) <= (n * m * n.min(m)) as f64 {
        pair_sum(g, h, plan)
    } else {
        expansion(g, h, plan)
    }
}

/// Literal sum over pairs of support cells.
fn pair_sum(g: ArrayView2<f64>, h: ArrayView2<f64>, plan: &Coupling) -> f64 {
    let e = plan.entries();
    let row = |&(i, j, a): &(usize, usize, f64)| -> f64 {
        let mut acc = 0.0;
        for &(k, l, b) in e {
            let d = g[[i, k]] - h[[j, l]];
            acc += d * d * b;
        }
        a * acc
    };
    let parts: Vec<f64> = if e.len() > 512 {
        e.par_iter().map(row).collect()
    } else {
        e.iter().map(row).collect()
    };
    parts.iter().sum()
}

/// `⟨g², p⊗p⟩ + ⟨h², q⊗q⟩ − 2⟨π, gπh⟩`, clamped at zero.
fn expansion(g: ArrayView2<f64>, h: ArrayView2<f64>, plan: &Coupling) -> f64 {
    let p = plan.row_marginal();
    let q = plan.col_marginal();
    let g2 = g.mapv(|v| v * v);
    let h2 = h.mapv(|v| v * v);
    let t1 = p.dot(&g2.dot(&p));
    let t2 = q.dot(&h2.dot(&q));
    let gph = cross_term(g, h, plan);
    let t3: f64 = plan.entries().iter().map(|&(i, j, m)| m * gph[[i, j]]).sum();
    (t1 + t2 - 2.0 * t3).max(0.0)
}

/// `g γ h` (both gauges symmetric).
fn cross_term(g: ArrayView2<f64>, h: ArrayView2<f64>, plan: &Coupling) -> Array2<f64> {
    let (n, m) = plan.shape();
    if plan.support_size() * 4 <= n * m {
        // Row l of `at` is column l of gγ.
        let mut at = Array2::<f64>::zeros((m, n));
        for &(k, l, w) in plan.entries() {
            at.row_mut(l).scaled_add(w, &g.row(k));
        }
        at.t().dot(&h)
    } else {
        g.dot(&plan.to_dense()).dot(&h)
    }
}

/// `C[i, j] = Σ_{k,l} |g[i, k] − h[j, l]|² γ[k, l]`.
pub fn local_cost(x: &GmSpace, y: &GmSpace, plan: &Coupling) -> Result<Array2<f64>> {
    check_plan(x, y, plan, GW_MARGINAL_TOL)?;
    Ok(local_cost_unchecked(x.gauge().view(), y.gauge().view(), plan))
}

pub(crate) fn local_cost_unchecked(g: ArrayView2<f64>, h: ArrayView2<f64>, plan: &Coupling) -> Array2<f64> {
    let p = plan.row_marginal();
    let q = plan.col_marginal();
    let a: Array1<f64> = g.mapv(|v| v * v).dot(&p);
    let b: Array1<f64> = h.mapv(|v| v * v).dot(&q);
    let mut c = cross_term(g, h, plan);
    Zip::indexed(&mut c).for_each(|(i, j), v| *v = a[i] + b[j] - 2.0 * *v);
    c
}

fn initial_plan(x: &GmSpace, y: &GmSpace, init: &GwInit) -> Result<Coupling> {
    let (xi, up) = (x.weights().view(), y.weights().view());
    match init {
        GwInit::Product => Ok(Coupling::product(xi, up)),
        GwInit::Identity => {
            if x.len() != y.len() || x.weights() != y.weights() {
                return Err(Error::Precondition(
                    "identity initialization needs equal weight vectors".into(),
                ));
            }
            Ok(Coupling::identity(xi))
        }
        GwInit::Given(p) => {
            check_plan(x, y, p, GW_MARGINAL_TOL)
                .map_err(|e| e.context("initial plan"))?;
            Ok(p.clone())
        }
        GwInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut rows: Vec<usize> = (0..x.len()).collect();
            let mut cols: Vec<usize> = (0..y.len()).collect();
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            nw_corner_ordered(xi, up, &rows, &cols)
        }
    }
}

/// Block-coordinate descent on the bi-convex relaxation from a single start.
fn descend(x: &GmSpace, y: &GmSpace, opts: &GwOptions, start: Coupling) -> Result<GwResult> {
    let (g, h) = (x.gauge().view(), y.gauge().view());
    let (xi, up) = (x.weights().view(), y.weights().view());
    let mut plan = start;
    let mut best: Option<(f64, Coupling)> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut start_value = 0.0;
    for k in 0..opts.outer_max_iter {
        let cost = local_cost_unchecked(g, h, &plan);
        let current = plan.objective(cost.view());
        if k == 0 {
            start_value = current;
        }
        if best.as_ref().is_none_or(|(v, _)| current < *v) {
            best = Some((current, plan.clone()));
        }
        let next = opts
            .inner
            .solve(cost.view(), xi, up, &plan)
            .map_err(|e| e.context(format!("inner solve at outer iteration {}", k + 1)))?;
        iterations = k + 1;
        let bilinear = next.objective(cost.view());
        let prev = history.last().copied();
        history.push(bilinear);
        let same = next == plan;
        plan = next;
        if same {
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            // Measured against the starting value too, so objectives that
            // tend to zero still terminate.
            let scale = prev.abs().max(bilinear.abs()).max(start_value.abs()).max(f64::MIN_POSITIVE);
            if (prev - bilinear).abs() <= opts.outer_tol * scale {
                converged = true;
                break;
            }
        }
    }
    // The last iterate has not been scored yet.
    let last = gw_squared(x, y, &plan);
    let plan = match best {
        Some((v, p)) if v < last => p,
        _ => plan,
    };
    let value = gw_squared(x, y, &plan).sqrt();
    Ok(GwResult { plan, value, iterations, converged, history })
}

/// Local GW solver: alternates local cost and inner transport solves.
///
/// The returned plan is the best one visited (including the start), so the
/// value never exceeds the value of the initial plan.
pub fn solve_gw(x: &GmSpace, y: &GmSpace, opts: &GwOptions) -> Result<GwResult> {
    opts.validate()?;
    for (name, s) in [("first", x), ("second", y)] {
        let report = s.validate();
        if !report.is_empty() {
            return Err(Error::InvalidInput(format!("{name} space: {}", report.join("; "))));
        }
    }
    let start = initial_plan(x, y, &opts.init)?;
    let mut result = descend(x, y, opts, start)?;
    for r in 0..opts.restarts {
        let seed = opts.seed.wrapping_add(r as u64);
        let start = initial_plan(x, y, &GwInit::Random(seed))?;
        let run = descend(x, y, opts, start).map_err(|e| e.context(format!("restart {r}")))?;
        if run.value < result.value {
            result = run;
        }
    }
    Ok(result)
}

/// Exhaustive minimum of `F_GW` over permutation plans of two uniform spaces.
pub fn brute_force_gw(x: &GmSpace, y: &GmSpace) -> Result<GwResult> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Precondition(format!(
            "brute force needs equal sizes, got {n} and {}",
            y.len()
        )));
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::SizeLimit(format!(
            "brute force handles at most {BRUTE_FORCE_MAX} points, got {n}"
        )));
    }
    if !x.is_uniform(1e-12) || !y.is_uniform(1e-12) {
        return Err(Error::Precondition("brute force needs uniform weights".into()));
    }
    let (g, h) = (x.gauge(), y.gauge());
    let score = |p: &[usize]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..n {
                let d = g[[i, k]] - h[[p[i], p[k]]];
                s += d * d;
            }
        }
        s
    };
    // Heap's algorithm, iterative.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best = score(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    let mut count = 1usize;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            count += 1;
            let s = score(&perm);
            if s < best {
                best = s;
                best_perm = perm.clone();
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let plan = Coupling::from_permutation(&best_perm, x.weights().view())?;
    let value = gw_squared(x, y, &plan).sqrt();
    Ok(GwResult { plan, value, iterations: count, converged: true, history: vec![value * value] })
}

/// Pairwise GW values with triangle-inequality restarts.
#[derive(Clone, Debug)]
pub struct PairwiseResult {
    pub values: Array2<f64>,
    /// Plans for `i < j`, rows indexed by space `i`.
    pub plans: HashMap<(usize, usize), Coupling>,
    /// Number of pairs improved in each restart round.
    pub improved: Vec<usize>,
}

impl PairwiseResult {
    /// Plan between spaces `i` and `j` (rows indexed by `i`).
    pub fn plan(&self, i: usize, j: usize) -> Option<Coupling> {
        match i.cmp(&j) {
            Ordering::Less => self.plans.get(&(i, j)).cloned(),
            Ordering::Greater => self.plans.get(&(j, i)).map(Coupling::transpose),
            Ordering::Equal => None,
        }
    }
}

/// Solves GW for every pair, then repeatedly restarts pairs that violate the
/// triangle inequality from the composition of the plans through the
/// offending intermediate space. Entries never increase across rounds.
pub fn pairwise_matrix(spaces: &[GmSpace], opts: &GwOptions, restart_rounds: usize) -> Result<PairwiseResult> {
    let n = spaces.len();
    if n < 2 {
        return Err(Error::InvalidInput("pairwise matrix needs at least two spaces".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let solved: Vec<GwResult> = pairs
        .par_iter()
        .map(|&(i, j)| {
            solve_gw(&spaces[i], &spaces[j], opts).map_err(|e| e.context(format!("pair ({i}, {j})")))
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((n, n));
    let mut plans = HashMap::new();
    for (&(i, j), r) in pairs.iter().zip(solved) {
        log::debug!("gw pair ({i}, {j}) = {:.6e}", r.value);
        values[[i, j]] = r.value;
        values[[j, i]] = r.value;
        plans.insert((i, j), r.plan);
    }
    let mut out = PairwiseResult { values, plans, improved: Vec::new() };
    for round in 0..restart_rounds {
        let v = &out.values;
        let candidates: Vec<(usize, usize, Vec<usize>)> = pairs
            .iter()
            .filter_map(|&(i, j)| {
                let ks: Vec<usize> = (0..n)
                    .filter(|&k| k != i && k != j && v[[i, k]] + v[[k, j]] < v[[i, j]])
                    .collect();
                (!ks.is_empty()).then_some((i, j, ks))
            })
            .collect();
        if candidates.is_empty() {
            out.improved.push(0);
            break;
        }
        let retried: Vec<Option<((usize, usize), GwResult)>> = candidates
            .par_iter()
            .map(|(i, j, ks)| {
                let (i, j) = (*i, *j);
                let mut best: Option<GwResult> = None;
                for &k in ks {
                    let ki = out.plan(k, i).expect("plan exists for distinct pair");
                    let kj = out.plan(k, j).expect("plan exists for distinct pair");
                    let start = compose_nw(&ki, &kj)
                        .map_err(|e| e.context(format!("pair ({i}, {j}) restart via {k}")))?;
                    let o = GwOptions { init: GwInit::Given(start), restarts: 0, ..opts.clone() };
                    let r = solve_gw(&spaces[i], &spaces[j], &o)
                        .map_err(|e| e.context(format!("pair ({i}, {j}) restart via {k}")))?;
                    if best.as_ref().is_none_or(|b| r.value < b.value) {
                        best = Some(r);
                    }
                }
                Ok(best
                    .filter(|b| b.value < out.values[[i, j]])
                    .map(|b| ((i, j), b)))
            })
            .collect::<Result<_>>()?;
        let mut count = 0;
        for ((i, j), r) in retried.into_iter().flatten() {
            log::debug!("restart round {round}: pair ({i}, {j}) {:.6e} -> {:.6e}", out.values[[i, j]], r.value);
            out.values[[i, j]] = r.value;
            out.values[[j, i]] = r.value;
            out.plans.insert((i, j), r.plan);
            count += 1;
        }
        out.improved.push(count);
        if count == 0 {
            break;
        }
    }
    Ok(out)
}

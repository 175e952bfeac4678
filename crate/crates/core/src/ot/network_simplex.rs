//! Primal network simplex on the complete bipartite transport network.
//!
//! Spanning-tree bookkeeping (thread / reverse-thread / successor counts,
//! strongly feasible leaving-arc rule, block-search pricing) follows the
//! classical LEMON design. Supplies are quantized to integers so the
//! combinatorial phase is exact; the final float plan is recovered from the
//! optimal basis and the unquantized marginals.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Mass quantum used for the integer flow phase.
pub const MASS_QUANTUM: f64 = 1e-12;

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Optimal basis found by the solver.
pub(crate) struct Basis {
    /// Positive-mass cells `(i, j, mass)` of the optimal vertex, row-major.
    pub entries: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

struct Simplex<'a> {
    n: usize,
    m: usize,
    arc_num: usize,
    cost: &'a [f64],
    art_cost: Vec<f64>,
    art_up: Vec<bool>,
    flow: Vec<i64>,
    state: Vec<i8>,
    root: usize,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    block_size: usize,
    next_arc: usize,
    tol: f64,
    // pivot scratch
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
}

impl<'a> Simplex<'a> {
    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.m
        } else {
            let u = e - self.arc_num;
            if self.art_up[u] {
                u
            } else {
                self.root
            }
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.n + e % self.m
        } else {
            let u = e - self.arc_num;
            if self.art_up[u] {
                self.root
            } else {
                u
            }
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.cost[e]
        } else {
            self.art_cost[e - self.arc_num]
        }
    }

    fn new(cost: &'a [f64], n: usize, m: usize, supply: &[i64]) -> Self {
        let node_num = n + m;
        let arc_num = n * m;
        let all = arc_num + node_num;
        let root = node_num;
        let max_cost = cost.iter().fold(0.0_f64, |a, &c| a.max(c.abs()));
        let art = (max_cost + 1.0) * node_num as f64;

        let mut s = Simplex {
            n,
            m,
            arc_num,
            cost,
            art_cost: vec![0.0; node_num],
            art_up: vec![true; node_num],
            flow: vec![0; all],
            state: vec![STATE_LOWER; all],
            root,
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            pi: vec![0.0; node_num + 1],
            dirty_revs: Vec::new(),
            block_size: ((arc_num as f64).sqrt() as usize).max(10),
            next_arc: 0,
            tol: 1e-13 * (max_cost + 1.0) * (node_num as f64).sqrt(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
        };
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        for u in 0..node_num {
            let e = arc_num + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if supply[u] >= 0 {
                s.pred_dir[u] = DIR_UP;
                s.art_up[u] = true;
                s.art_cost[u] = 0.0;
                s.flow[e] = supply[u];
                s.pi[u] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.art_up[u] = false;
                s.art_cost[u] = art;
                s.flow[e] = -supply[u];
                s.pi[u] = art;
            }
        }
        s
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.tol;
        let mut found = false;
        let mut cnt = self.block_size;
        let total = self.arc_num;
        let m = self.m;
        let n = self.n;
        let mut e = self.next_arc;
        let mut i = e / m;
        let mut j = e % m;
        for _ in 0..total {
            if self.state[e] != STATE_TREE {
                let c = self.cost[e] + self.pi[i] - self.pi[n + j];
                if c < min {
                    min = c;
                    self.in_arc = e;
                    found = true;
                }
            }
            e += 1;
            j += 1;
            if j == m {
                j = 0;
                i += 1;
            }
            if e == total {
                e = 0;
                i = 0;
                j = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Strongly feasible leaving-arc selection. Capacities are infinite, so
    /// only arcs traversed against their direction can block the cycle.
    fn find_leaving_arc(&mut self) -> bool {
        // Entering arcs are always at their lower bound.
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let delta = self.delta;
        if delta > 0 {
            self.flow[self.in_arc] += delta;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as i64 * delta;
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as i64 * delta;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) { DIR_UP } else { DIR_DOWN };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                // succ_num[u] - succ_num[p] is negative; accumulate in wrapping arithmetic.
                tmp_sc = tmp_sc.wrapping_add(self.succ_num[u].wrapping_sub(self.succ_num[p]));
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in]
            - self.pi[u_in]
            - self.pred_dir[u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Potentials recomputed from scratch along the thread (preorder).
    fn refresh_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let p = self.parent[u];
            self.pi[u] = self.pi[p] - self.pred_dir[u] as f64 * self.arc_cost(self.pred[u]);
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<usize> {
        let mut pivots = 0usize;
        loop {
            while self.find_entering_arc() {
                self.find_join_node();
                if !self.find_leaving_arc() {
                    return Err(Error::Numerical("transport problem is unbounded".into()));
                }
                self.change_flow();
                self.update_tree_structure();
                self.update_potential();
                pivots += 1;
            }
            // Accumulated rounding in the potentials can hide an improving arc.
            self.refresh_potentials();
            if !self.find_entering_arc() {
                return Ok(pivots);
            }
        }
    }

    /// Float flows on the final spanning tree for the given real supplies.
    fn tree_plan(&self, supply: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut order = Vec::with_capacity(self.n + self.m);
        let mut u = self.thread[self.root];
        while u != self.root {
            order.push(u);
            u = self.thread[u];
        }
        let mut sub = supply.to_vec();
        sub.push(0.0);
        let mut entries = Vec::with_capacity(self.n + self.m);
        for &u in order.iter().rev() {
            let e = self.pred[u];
            let f = if self.pred_dir[u] == DIR_UP { sub[u] } else { -sub[u] };
            let p = self.parent[u];
            sub[p] += sub[u];
            if e < self.arc_num && f > 0.0 {
                entries.push((e / self.m, e % self.m, f));
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        entries
    }
}

fn quantize(w: ArrayView1<f64>) -> Vec<i64> {
    w.iter().map(|&v| (v / MASS_QUANTUM).round() as i64).collect()
}

/// Solves `min ⟨cost, π⟩` over couplings of `xi` and `upsilon`.
pub(crate) fn transport_simplex(
    cost: ArrayView2<f64>,
    xi: ArrayView1<f64>,
    upsilon: ArrayView1<f64>,
) -> Result<Basis> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("empty transport problem".into()));
    }
    let min_cost = cost.iter().fold(f64::INFINITY, |a, &c| a.min(c));
    let flat: Vec<f64> = cost.iter().map(|&c| c - min_cost).collect();

    let mut a = quantize(xi);
    let mut b = quantize(upsilon);
    let (sa, sb): (i64, i64) = (a.iter().sum(), b.iter().sum());
    // Absorb quantization drift into the heaviest atom of the lighter side.
    if sa > sb {
        let k = argmax_i64(&b);
        b[k] += sa - sb;
    } else if sb > sa {
        let k = argmax_i64(&a);
        a[k] += sb - sa;
    }
    let supply: Vec<i64> = a.iter().copied().chain(b.iter().map(|&v| -v)).collect();

    let mut simplex = Simplex::new(&flat, n, m, &supply);
    let pivots = simplex.run()?;

    let real: Vec<f64> = xi.iter().copied().chain(upsilon.iter().map(|&v| -v)).collect();
    let entries = simplex.tree_plan(&real);
    Ok(Basis { entries, pivots })
}

fn argmax_i64(v: &[i64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

//! Multi-marginal plans, gluings along a shared reference marginal and their
//! meltings.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::ot::Coupling;

/// Pieces lighter than this are dropped while splitting reference atoms.
pub const SPLIT_DROP: f64 = 1e-15;

/// A sparse multi-marginal plan: index tuples with positive masses.
///
/// Tuples are sorted lexicographically and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCoupling {
    sizes: Vec<usize>,
    indices: Vec<usize>,
    masses: Vec<f64>,
}

impl MultiCoupling {
    /// Sorts, merges repeated tuples and drops non-positive masses.
    pub fn from_tuples(sizes: Vec<usize>, tuples: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let n = sizes.len();
        if n == 0 {
            return Err(Error::InvalidInput("a multi-coupling needs at least one marginal".into()));
        }
        let mut indices = Vec::with_capacity(tuples.len() * n);
        let mut masses = Vec::with_capacity(tuples.len());
        for (t, m) in tuples {
            if t.len() != n {
                return Err(Error::InvalidInput(format!(
                    "tuple of length {} in a {n}-marginal plan",
                    t.len()
                )));
            }
            if let Some((axis, &i)) = t.iter().enumerate().find(|(a, &i)| i >= sizes[*a]) {
                return Err(Error::InvalidInput(format!(
                    "index {i} out of range on axis {axis} (size {})",
                    sizes[axis]
                )));
            }
            if !m.is_finite() {
                return Err(Error::InvalidInput("non-finite mass".into()));
            }
            indices.extend_from_slice(&t);
            masses.push(m);
        }
        Ok(Self::canonical(sizes, indices, masses))
    }

    fn canonical(sizes: Vec<usize>, indices: Vec<usize>, masses: Vec<f64>) -> Self {
        let n = sizes.len();
        let mut order: Vec<usize> = (0..masses.len()).collect();
        order.sort_by(|&a, &b| indices[a * n..(a + 1) * n].cmp(&indices[b * n..(b + 1) * n]));
        let mut out_idx: Vec<usize> = Vec::with_capacity(indices.len());
        let mut out_mass: Vec<f64> = Vec::with_capacity(masses.len());
        for s in order {
            let t = &indices[s * n..(s + 1) * n];
            let k = out_mass.len();
            if k > 0 && &out_idx[(k - 1) * n..k * n] == t {
                out_mass[k - 1] += masses[s];
            } else {
                out_idx.extend_from_slice(t);
                out_mass.push(masses[s]);
            }
        }
        let mut indices = Vec::with_capacity(out_idx.len());
        let mut masses = Vec::with_capacity(out_mass.len());
        for (k, &m) in out_mass.iter().enumerate() {
            if m > 0.0 {
                indices.extend_from_slice(&out_idx[k * n..(k + 1) * n]);
                masses.push(m);
            }
        }
        MultiCoupling { sizes, indices, masses }
    }

    /// `(id, …, id)_# ξ` on `n_marginals` copies of the same space.
    pub fn diagonal(xi: ArrayView1<f64>, n_marginals: usize) -> Self {
        let n = xi.len();
        let mut indices = Vec::new();
        let mut masses = Vec::new();
        for (i, &w) in xi.iter().enumerate() {
            if w > 0.0 {
                indices.extend(std::iter::repeat_n(i, n_marginals));
                masses.push(w);
            }
        }
        MultiCoupling { sizes: vec![n; n_marginals], indices, masses }
    }

    /// A bi-marginal plan viewed as a two-axis multi-coupling.
    pub fn from_coupling(c: &Coupling) -> Self {
        let mut indices = Vec::with_capacity(2 * c.support_size());
        let mut masses = Vec::with_capacity(c.support_size());
        for &(i, j, m) in c.entries() {
            indices.push(i);
            indices.push(j);
            masses.push(m);
        }
        MultiCoupling { sizes: vec![c.n_rows(), c.n_cols()], indices, masses }
    }

    pub fn n_marginals(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of support tuples.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn tuple(&self, s: usize) -> &[usize] {
        let n = self.n_marginals();
        &self.indices[s * n..(s + 1) * n]
    }

    pub fn mass(&self, s: usize) -> f64 {
        self.masses[s]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.indices
            .chunks_exact(self.n_marginals())
            .zip(self.masses.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Pushforward onto axis `axis`.
    pub fn marginal(&self, axis: usize) -> Result<Array1<f64>> {
        self.check_axis(axis)?;
        let mut w = Array1::zeros(self.sizes[axis]);
        for (t, m) in self.iter() {
            w[t[axis]] += m;
        }
        Ok(w)
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.n_marginals() {
            return Err(Error::InvalidInput(format!(
                "axis {axis} out of range for {} marginals",
                self.n_marginals()
            )));
        }
        Ok(())
    }

    /// `(P_{X_i × X_j})_# μ` with duplicate cells merged.
    pub fn bimarginal(&self, i: usize, j: usize) -> Result<Coupling> {
        self.check_axis(i)?;
        self.check_axis(j)?;
        if i == j {
            return Err(Error::InvalidInput(format!("bimarginal needs two distinct axes, got {i} twice")));
        }
        let entries = self.iter().map(|(t, m)| (t[i], t[j], m)).collect();
        Coupling::from_entries(self.sizes[i], self.sizes[j], entries)
    }

    /// Projection onto the listed axes, merging tuples that collide.
    pub fn project(&self, axes: &[usize]) -> Result<MultiCoupling> {
        for &a in axes {
            self.check_axis(a)?;
        }
        let k = axes.len();
        let mut indices = Vec::with_capacity(self.len() * k);
        for (t, _) in self.iter() {
            indices.extend(axes.iter().map(|&a| t[a]));
        }
        let sizes = axes.iter().map(|&a| self.sizes[a]).collect();
        Ok(Self::canonical(sizes, indices, self.masses.clone()))
    }

    /// Checks every marginal against `weights[i]` within `tol` (max-abs).
    pub fn check_marginals(&self, weights: &[ArrayView1<f64>], tol: f64) -> Result<()> {
        if weights.len() != self.n_marginals() {
            return Err(Error::MarginalMismatch(format!(
                "{} weight vectors for {} marginals",
                weights.len(),
                self.n_marginals()
            )));
        }
        for (axis, w) in weights.iter().enumerate() {
            if w.len() != self.sizes[axis] {
                return Err(Error::MarginalMismatch(format!(
                    "axis {axis} has size {} but weights have length {}",
                    self.sizes[axis],
                    w.len()
                )));
            }
            let err = crate::ot::max_abs_diff(self.marginal(axis)?.view(), *w);
            if err > tol {
                return Err(Error::MarginalMismatch(format!(
                    "marginal {axis} off by {err:.3e} (tolerance {tol:.1e})"
                )));
            }
        }
        Ok(())
    }
}

/// A multi-coupling over `Y × X_1 × … × X_N`; axis 0 is the reference space.
#[derive(Clone, Debug, PartialEq)]
pub struct Gluing {
    plan: MultiCoupling,
}

impl Gluing {
    pub fn plan(&self) -> &MultiCoupling {
        &self.plan
    }

    pub fn into_plan(self) -> MultiCoupling {
        self.plan
    }

    /// Number of glued couplings `N`.
    pub fn n_glued(&self) -> usize {
        self.plan.n_marginals() - 1
    }

    /// `(P_{Y × X_i})_# γ` for `i` in `0..N`.
    pub fn projection(&self, i: usize) -> Result<Coupling> {
        self.plan.bimarginal(0, i + 1)
    }
}

/// The north-west corner plan of `ξ` and `υ`.
pub fn nw_corner_coupling(xi: ArrayView1<f64>, upsilon: ArrayView1<f64>) -> Result<Coupling> {
    let rows: Vec<usize> = (0..xi.len()).collect();
    let cols: Vec<usize> = (0..upsilon.len()).collect();
    nw_corner_ordered(xi, upsilon, &rows, &cols)
}

/// North-west corner rule after visiting rows and columns in the given orders.
pub fn nw_corner_ordered(
    xi: ArrayView1<f64>,
    upsilon: ArrayView1<f64>,
    rows: &[usize],
    cols: &[usize],
) -> Result<Coupling> {
    let (sa, sb) = (xi.sum(), upsilon.sum());
    if (sa - 1.0).abs() > crate::gmspace::WEIGHT_SUM_TOL || (sb - 1.0).abs() > crate::gmspace::WEIGHT_SUM_TOL {
        return Err(Error::InvalidInput(format!(
            "marginals must be normalized, got masses {sa} and {sb}"
        )));
    }
    let mut a: Vec<f64> = rows.iter().map(|&i| xi[i]).collect();
    let mut b: Vec<f64> = cols.iter().map(|&j| upsilon[j]).collect();
    let mut entries = Vec::with_capacity(a.len() + b.len());
    let (mut r, mut c) = (0, 0);
    while r < a.len() && c < b.len() {
        let low = a[r].min(b[c]);
        let row_done = a[r] - low <= SPLIT_DROP;
        let col_done = b[c] - low <= SPLIT_DROP;
        // Prefer an unsplit remainder when both sides finish together.
        let t = if row_done && a[r] == xi[rows[r]] {
            a[r]
        } else if col_done && b[c] == upsilon[cols[c]] {
            b[c]
        } else {
            low
        };
        if t > 0.0 {
            entries.push((rows[r], cols[c], t));
        }
        if row_done {
            r += 1;
        } else {
            a[r] -= t;
        }
        if col_done {
            c += 1;
        } else {
            b[c] -= t;
        }
    }
    Coupling::from_entries(xi.len(), upsilon.len(), entries)
}

/// Glues `π_1, …, π_N` (all with rows indexed by the reference space) by
/// sweeping each reference atom and splitting its mass across the
/// conditional rows simultaneously.
pub fn glue_nw(couplings: &[Coupling]) -> Result<Gluing> {
    let first = couplings
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to glue".into()))?;
    let m = first.n_rows();
    let reference = first.row_marginal();
    for (i, c) in couplings.iter().enumerate().skip(1) {
        if c.n_rows() != m {
            return Err(Error::MarginalMismatch(format!(
                "coupling {i} has {} reference rows, expected {m}",
                c.n_rows()
            )));
        }
        let err = crate::ot::max_abs_diff(c.row_marginal().view(), reference.view());
        if err > 1e-12 {
            return Err(Error::MarginalMismatch(format!(
                "first marginal of coupling {i} differs by {err:.3e}"
            )));
        }
    }
    let n = couplings.len();
    let ranges: Vec<_> = couplings.iter().map(|c| c.row_ranges()).collect();
    let mut sizes = vec![m];
    sizes.extend(couplings.iter().map(|c| c.n_cols()));

    let mut indices = Vec::new();
    let mut masses = Vec::new();
    let mut tuple = vec![0usize; n + 1];
    for y in 0..m {
        let rows: Vec<&[(usize, usize, f64)]> = couplings
            .iter()
            .zip(&ranges)
            .map(|(c, r)| &c.entries()[r[y].clone()])
            .collect();
        if rows.iter().any(|r| r.is_empty()) {
            continue;
        }
        tuple[0] = y;
        let mut ptr = vec![0usize; n];
        let mut rest: Vec<f64> = rows.iter().map(|r| r[0].2).collect();
        let start = masses.len();
        let mut dropped = 0.0;
        'sweep: loop {
            let low = rest.iter().copied().fold(f64::INFINITY, f64::min);
            // Entries finishing together within rounding; an untouched entry
            // supplies the piece mass so unsplit cells are copied verbatim.
            let t = (0..n)
                .filter(|&i| rest[i] - low <= SPLIT_DROP && rest[i] == rows[i][ptr[i]].2)
                .map(|i| rest[i])
                .next()
                .unwrap_or(low);
            if t >= SPLIT_DROP {
                for i in 0..n {
                    tuple[i + 1] = rows[i][ptr[i]].1;
                }
                indices.extend_from_slice(&tuple);
                masses.push(t);
            } else {
                dropped += t;
            }
            let mut finished = false;
            for i in 0..n {
                if rest[i] - low <= SPLIT_DROP {
                    ptr[i] += 1;
                    if ptr[i] == rows[i].len() {
                        finished = true;
                    } else {
                        rest[i] = rows[i][ptr[i]].2;
                    }
                } else {
                    rest[i] -= t;
                }
            }
            if finished {
                break 'sweep;
            }
        }
        if dropped > 0.0 && masses.len() > start {
            let mut heavy = start;
            for k in start..masses.len() {
                if masses[k] > masses[heavy] {
                    heavy = k;
                }
            }
            masses[heavy] += dropped;
        }
    }
    Ok(Gluing { plan: MultiCoupling::canonical(sizes, indices, masses) })
}

/// `(P_{X_×})_# γ`: drops the reference axis and merges repeated tuples.
pub fn melt(gluing: &Gluing) -> MultiCoupling {
    let axes: Vec<usize> = (1..gluing.plan.n_marginals()).collect();
    gluing
        .plan
        .project(&axes)
        .expect("melting axes are in range by construction")
}

/// Plan between the column spaces of `a` and `b` obtained by gluing them
/// along their shared row space.
pub fn compose_nw(a: &Coupling, b: &Coupling) -> Result<Coupling> {
    let g = glue_nw(&[a.clone(), b.clone()])?;
    g.plan.bimarginal(1, 2)
}

/// Rounds plans `π_i` (rows: reference atoms, columns: atoms of `X_i`) to
/// bijections by successive argmax without reusing reference atoms.
///
/// Returns the maps `T_i` (entry `x` holds the reference atom assigned to
/// `x`) and the multi-coupling `(T_1⁻¹, …, T_N⁻¹)_# υ`.
pub fn max_rule_without_replacement(
    couplings: &[Coupling],
    upsilon: ArrayView1<f64>,
) -> Result<(Vec<Vec<usize>>, MultiCoupling)> {
    let m = upsilon.len();
    if m == 0 || couplings.is_empty() {
        return Err(Error::InvalidInput("max rule needs a non-empty reference and at least one plan".into()));
    }
    let u = 1.0 / m as f64;
    if upsilon.iter().any(|w| (w - u).abs() > 1e-12) {
        return Err(Error::Precondition("max rule needs uniform reference weights".into()));
    }
    for (i, c) in couplings.iter().enumerate() {
        if c.shape() != (m, m) {
            return Err(Error::Precondition(format!(
                "max rule needs {m}x{m} plans, plan {i} is {:?}",
                c.shape()
            )));
        }
    }
    let mut maps = Vec::with_capacity(couplings.len());
    for (i, c) in couplings.iter().enumerate() {
        let cols = c.transpose();
        let ranges = cols.row_ranges();
        let mut taken = vec![false; m];
        let mut map = vec![0usize; m];
        for x in 0..m {
            let mut best: Option<(usize, f64)> = None;
            for &(_, y, mass) in &cols.entries()[ranges[x].clone()] {
                if taken[y] {
                    continue;
                }
                let score = mass / upsilon[y];
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((y, score));
                }
            }
            let y = match best {
                Some((y, _)) => y,
                None => {
                    let y = taken.iter().position(|t| !t).expect("fewer atoms assigned than available");
                    log::warn!(
                        "max rule: plan {i} has no mass on free reference atoms for atom {x}; using atom {y}"
                    );
                    y
                }
            };
            taken[y] = true;
            map[x] = y;
        }
        maps.push(map);
    }
    let mut inverse = vec![vec![0usize; m]; couplings.len()];
    for (i, map) in maps.iter().enumerate() {
        for (x, &y) in map.iter().enumerate() {
            inverse[i][y] = x;
        }
    }
    let tuples = (0..m)
        .map(|y| (inverse.iter().map(|inv| inv[y]).collect(), upsilon[y]))
        .collect();
    let sizes = vec![m; couplings.len()];
    Ok((maps, MultiCoupling::from_tuples(sizes, tuples)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nw_corner_examples() {
        let p = nw_corner_coupling(array![0.5, 0.5].view(), array![0.3, 0.7].view()).unwrap();
        let want = array![[0.3, 0.2], [0.0, 0.5]];
        assert!((p.to_dense() - &want).iter().all(|d| d.abs() < 1e-15));
        assert_eq!(p.support_size(), 3);
        let p = nw_corner_coupling(array![1.0].view(), array![0.4, 0.6].view()).unwrap();
        assert_eq!(p.to_dense(), array![[0.4, 0.6]]);
        let p = nw_corner_coupling(array![0.5, 0.5].view(), array![0.5, 0.5].view()).unwrap();
        assert_eq!(p.entries(), &[(0, 0, 0.5), (1, 1, 0.5)]);
        assert!(nw_corner_coupling(array![0.5, 0.6].view(), array![1.0].view()).is_err());
    }

    #[test]
    fn glue_two_plans_by_hand() {
        let id = Coupling::identity(array![0.5, 0.5].view());
        let p2 = Coupling::from_dense(array![[0.3, 0.2], [0.0, 0.5]].view());
        let g = glue_nw(&[id, p2.clone()]).unwrap();
        let got: Vec<_> = g.plan().iter().map(|(t, m)| (t.to_vec(), m)).collect();
        assert_eq!(
            got,
            vec![(vec![0, 0, 0], 0.3), (vec![0, 0, 1], 0.2), (vec![1, 1, 1], 0.5)]
        );
        let mu = melt(&g);
        assert_eq!(mu.bimarginal(0, 1).unwrap(), p2);
        assert_eq!(mu.len(), 3);
    }

    #[test]
    fn glue_single_plan_is_itself() {
        let p = Coupling::from_dense(array![[0.3, 0.2], [0.0, 0.5]].view());
        let g = glue_nw(std::slice::from_ref(&p)).unwrap();
        assert_eq!(g.projection(0).unwrap(), p);
        let mu = melt(&g);
        assert_eq!(mu.marginal(0).unwrap(), array![0.3, 0.7]);
    }

    #[test]
    fn glue_identities_is_diagonal() {
        let xi = array![0.2, 0.3, 0.5];
        let id = Coupling::identity(xi.view());
        let g = glue_nw(&[id.clone(), id.clone(), id]).unwrap();
        assert!(g.plan().iter().all(|(t, _)| t.iter().all(|&i| i == t[0])));
        assert_eq!(melt(&g), MultiCoupling::diagonal(xi.view(), 3));
    }

    #[test]
    fn glue_rejects_mismatched_reference() {
        let a = Coupling::identity(array![0.5, 0.5].view());
        let b = Coupling::identity(array![0.4, 0.6].view());
        assert!(matches!(glue_nw(&[a, b]), Err(Error::MarginalMismatch(_))));
    }

    #[test]
    fn bimarginal_transpose_and_axis_errors() {
        let p = Coupling::from_dense(array![[0.3, 0.2], [0.0, 0.5]].view());
        let mu = MultiCoupling::from_coupling(&p);
        assert_eq!(mu.bimarginal(1, 0).unwrap(), p.transpose());
        assert!(mu.bimarginal(0, 2).is_err());
        assert!(mu.bimarginal(1, 1).is_err());
        let d = MultiCoupling::diagonal(array![0.25, 0.75].view(), 3);
        assert_eq!(d.bimarginal(0, 2).unwrap(), Coupling::identity(array![0.25, 0.75].view()));
    }

    #[test]
    fn max_rule_examples() {
        let u = array![0.5, 0.5];
        let dominant = Coupling::from_dense(array![[0.4, 0.1], [0.1, 0.4]].view());
        let (maps, mu) = max_rule_without_replacement(&[dominant], u.view()).unwrap();
        assert_eq!(maps, vec![vec![0, 1]]);
        assert_eq!(mu.len(), 2);
        let flat = Coupling::from_dense(array![[0.25, 0.25], [0.25, 0.25]].view());
        let (maps, _) = max_rule_without_replacement(&[flat], u.view()).unwrap();
        assert_eq!(maps, vec![vec![0, 1]]);
        let anti = Coupling::from_dense(array![[0.1, 0.4], [0.4, 0.1]].view());
        let (maps, mu) = max_rule_without_replacement(&[anti], u.view()).unwrap();
        assert_eq!(maps, vec![vec![1, 0]]);
        assert_eq!(mu.tuple(0), &[0]);
    }

    #[test]
    fn max_rule_zero_column_falls_back_to_lowest_free_atom() {
        let u = array![0.5, 0.5];
        // Column 1 carries no mass on the free atom left after column 0 takes atom 1.
        let p = Coupling::from_dense(array![[0.0, 0.5], [0.5, 0.0]].view());
        let (maps, _) = max_rule_without_replacement(&[p], u.view()).unwrap();
        assert_eq!(maps, vec![vec![1, 0]]);
        let q = Coupling::from_entries(2, 2, vec![(1, 0, 0.5)]).unwrap();
        let (maps, _) = max_rule_without_replacement(&[q], u.view()).unwrap();
        assert_eq!(maps, vec![vec![1, 0]]);
    }

    #[test]
    fn max_rule_preconditions() {
        let p = Coupling::identity(array![0.5, 0.5].view());
        assert!(matches!(
            max_rule_without_replacement(&[p.clone()], array![0.4, 0.6].view()),
            Err(Error::Precondition(_))
        ));
        let r = Coupling::from_dense(array![[0.5, 0.0, 0.0], [0.0, 0.25, 0.25]].view());
        assert!(matches!(
            max_rule_without_replacement(&[p, r], array![0.5, 0.5].view()),
            Err(Error::Precondition(_))
        ));
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        let w: Array1<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let s = w.sum();
        let mut w = w / s;
        let drift = 1.0 - w.sum();
        w[0] += drift;
        w
    }

    fn random_vertex(rng: &mut ChaCha8Rng, xi: &Array1<f64>, n: usize) -> Coupling {
        let up = random_simplex(rng, n);
        let mut rows: Vec<usize> = (0..xi.len()).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rows.shuffle(rng);
        cols.shuffle(rng);
        nw_corner_ordered(xi.view(), up.view(), &rows, &cols).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn glue_recovers_projections_and_bounds_support(seed in any::<u64>(), m in 1usize..8, n_plans in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xi = random_simplex(&mut rng, m);
            let sizes: Vec<usize> = (0..n_plans).map(|_| rng.random_range(1..8)).collect();
            let plans: Vec<Coupling> = sizes.iter().map(|&n| random_vertex(&mut rng, &xi, n)).collect();
            let g = glue_nw(&plans).unwrap();
            prop_assert!(g.plan().len() <= m + sizes.iter().sum::<usize>() - n_plans);
            for (i, p) in plans.iter().enumerate() {
                let back = g.projection(i).unwrap();
                prop_assert!(back.max_abs_diff(p) <= 1e-12);
            }
            let mu = melt(&g);
            for (i, p) in plans.iter().enumerate() {
                let err = crate::ot::max_abs_diff(mu.marginal(i).unwrap().view(), p.col_marginal().view());
                prop_assert!(err <= 1e-10);
            }
        }

        #[test]
        fn melting_identity_glue_returns_plan(seed in any::<u64>(), m in 1usize..8, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xi = random_simplex(&mut rng, m);
            let p = random_vertex(&mut rng, &xi, n);
            let g = glue_nw(&[Coupling::identity(xi.view()), p.clone()]).unwrap();
            prop_assert_eq!(melt(&g).bimarginal(0, 1).unwrap(), p);
        }

        #[test]
        fn max_rule_gives_bijections(seed in any::<u64>(), m in 1usize..8, n_plans in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Array1::from_elem(m, 1.0 / m as f64);
            let plans: Vec<Coupling> = (0..n_plans)
                .map(|_| {
                    let mut rows: Vec<usize> = (0..m).collect();
                    rows.shuffle(&mut rng);
                    let mut cols: Vec<usize> = (0..m).collect();
                    cols.shuffle(&mut rng);
                    nw_corner_ordered(u.view(), u.view(), &rows, &cols).unwrap()
                })
                .collect();
            let (maps, mu) = max_rule_without_replacement(&plans, u.view()).unwrap();
            for map in &maps {
                let mut seen = map.clone();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
            }
            prop_assert_eq!(mu.len(), m);
            prop_assert!(mu.masses().iter().all(|&w| w == 1.0 / m as f64));
            let views: Vec<_> = (0..n_plans).map(|_| u.view()).collect();
            mu.check_marginals(&views, 1e-12).unwrap();
        }
    }
}

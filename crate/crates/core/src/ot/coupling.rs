use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-10;

/// A bi-marginal transport plan stored as a sorted sparse list.
///
/// Entries are sorted row-major, unique, and strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    /// Sorts, merges duplicate cells and drops non-positive masses.
    pub fn from_entries(
        n_rows: usize,
        n_cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(i, j, _)) = entries.iter().find(|(i, j, _)| *i >= n_rows || *j >= n_cols) {
            return Err(Error::InvalidInput(format!(
                "entry ({i}, {j}) outside a {n_rows}x{n_cols} plan"
            )));
        }
        if entries.iter().any(|e| !e.2.is_finite()) {
            return Err(Error::InvalidInput("non-finite plan mass".into()));
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, m) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += m,
                _ => merged.push((i, j, m)),
            }
        }
        merged.retain(|e| e.2 > 0.0);
        Ok(Coupling { n_rows, n_cols, entries: merged })
    }

    /// Keeps strictly positive cells of a dense plan.
    pub fn from_dense(plan: ArrayView2<f64>) -> Self {
        let (n, m) = plan.dim();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let v = plan[[i, j]];
                if v > 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Coupling { n_rows: n, n_cols: m, entries }
    }

    /// The independent coupling `ξ ⊗ υ`.
    pub fn product(xi: ArrayView1<f64>, upsilon: ArrayView1<f64>) -> Self {
        let mut entries = Vec::with_capacity(xi.len() * upsilon.len());
        for (i, &a) in xi.iter().enumerate() {
            for (j, &b) in upsilon.iter().enumerate() {
                if a * b > 0.0 {
                    entries.push((i, j, a * b));
                }
            }
        }
        Coupling { n_rows: xi.len(), n_cols: upsilon.len(), entries }
    }

    /// The diagonal coupling `(id, id)_# ξ`.
    pub fn identity(xi: ArrayView1<f64>) -> Self {
        let entries = xi
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| (i, i, a))
            .collect();
        Coupling { n_rows: xi.len(), n_cols: xi.len(), entries }
    }

    /// Plan of the map `i -> perm[i]` carrying mass `xi[i]`.
    pub fn from_permutation(perm: &[usize], xi: ArrayView1<f64>) -> Result<Self> {
        let n = perm.len();
        let entries = perm.iter().enumerate().map(|(i, &j)| (i, j, xi[i])).collect();
        Self::from_entries(n, n, entries)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn row_marginal(&self) -> Array1<f64> {
        let mut r = Array1::zeros(self.n_rows);
        for &(i, _, m) in &self.entries {
            r[i] += m;
        }
        r
    }

    pub fn col_marginal(&self) -> Array1<f64> {
        let mut c = Array1::zeros(self.n_cols);
        for &(_, j, m) in &self.entries {
            c[j] += m;
        }
        c
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_rows, self.n_cols));
        for &(i, j, m) in &self.entries {
            d[[i, j]] = m;
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(a, b, _)| (a, b))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<_> = self.entries.iter().map(|&(i, j, m)| (j, i, m)).collect();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Coupling { n_rows: self.n_cols, n_cols: self.n_rows, entries }
    }

    /// Half-open ranges into [`entries`](Self::entries), one per row.
    pub fn row_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::with_capacity(self.n_rows);
        let mut k = 0;
        for i in 0..self.n_rows {
            let start = k;
            while k < self.entries.len() && self.entries[k].0 == i {
                k += 1;
            }
            ranges.push(start..k);
        }
        ranges
    }

    /// `⟨cost, π⟩`.
    pub fn objective(&self, cost: ArrayView2<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, m)| cost[[i, j]] * m).sum()
    }

    /// Checks shape and marginals against `xi` and `upsilon` within `tol` (max-abs).
    pub fn check_marginals(&self, xi: ArrayView1<f64>, upsilon: ArrayView1<f64>, tol: f64) -> Result<()> {
        if xi.len() != self.n_rows || upsilon.len() != self.n_cols {
            return Err(Error::MarginalMismatch(format!(
                "plan is {}x{} but marginals have lengths {} and {}",
                self.n_rows,
                self.n_cols,
                xi.len(),
                upsilon.len()
            )));
        }
        let r = max_abs_diff(self.row_marginal().view(), xi);
        let c = max_abs_diff(self.col_marginal().view(), upsilon);
        if r > tol || c > tol {
            return Err(Error::MarginalMismatch(format!(
                "row error {r:.3e}, column error {c:.3e} (tolerance {tol:.1e})"
            )));
        }
        Ok(())
    }

    /// Largest absolute cell difference to another plan of the same shape.
    pub fn max_abs_diff(&self, other: &Coupling) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut worst = 0.0_f64;
        let (ea, eb) = (&self.entries, &other.entries);
        while a < ea.len() || b < eb.len() {
            let ka = ea.get(a).map(|e| (e.0, e.1));
            let kb = eb.get(b).map(|e| (e.0, e.1));
            match (ka, kb) {
                (Some(x), Some(y)) if x == y => {
                    worst = worst.max((ea[a].2 - eb[b].2).abs());
                    a += 1;
                    b += 1;
                }
                (Some(x), Some(y)) if x < y => {
                    worst = worst.max(ea[a].2);
                    a += 1;
                }
                (Some(_), None) => {
                    worst = worst.max(ea[a].2);
                    a += 1;
                }
                _ => {
                    worst = worst.max(eb[b].2);
                    b += 1;
                }
            }
        }
        worst
    }
}

pub(crate) fn max_abs_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn entries_are_merged_and_sorted() {
        let c = Coupling::from_entries(2, 2, vec![(1, 1, 0.25), (0, 0, 0.5), (1, 1, 0.25), (0, 1, 0.0)])
            .unwrap();
        assert_eq!(c.entries(), &[(0, 0, 0.5), (1, 1, 0.5)]);
        assert_eq!(c.get(1, 1), 0.5);
        assert_eq!(c.get(0, 1), 0.0);
    }

    #[test]
    fn marginals_and_transpose() {
        let c = Coupling::from_dense(array![[0.3, 0.2], [0.0, 0.5]].view());
        assert_eq!(c.row_marginal(), array![0.5, 0.5]);
        assert_eq!(c.col_marginal(), array![0.3, 0.7]);
        let t = c.transpose();
        assert_eq!(t.to_dense(), c.to_dense().t());
        assert!(c.check_marginals(array![0.5, 0.5].view(), array![0.3, 0.7].view(), 1e-12).is_ok());
        assert!(c.check_marginals(array![0.6, 0.4].view(), array![0.3, 0.7].view(), 1e-12).is_err());
    }

    #[test]
    fn row_ranges_cover_empty_rows() {
        let c = Coupling::from_entries(3, 2, vec![(0, 0, 0.5), (2, 1, 0.5)]).unwrap();
        assert_eq!(c.row_ranges(), vec![0..1, 1..1, 1..2]);
    }
}

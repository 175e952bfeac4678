//! Evaluation metrics: node correctness of matchings, nearest-neighbor
//! confusion matrices, and MRE / PCC between distance matrices.

use ndarray::{Array2, ArrayView2};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::MultiCoupling;

/// Canonical node ids: `ids[i][x]` is the node of the underlying graph that
/// node `x` of input `i` is a copy of.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ids: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeCorrectness {
    pub nc1: f64,
    pub nc_all: f64,
}

/// Fraction of support tuples with at least one correctly matched pair
/// (`nc1`) and with every pair correct (`nc_all`). Tuples are counted as
/// they are, duplicates included.
pub fn node_correctness(mu: &MultiCoupling, truth: &GroundTruth) -> Result<NodeCorrectness> {
    let n = mu.n_marginals();
    if n < 2 {
        return Err(Error::InvalidInput("node correctness needs at least two inputs".into()));
    }
    if truth.ids.len() != n {
        return Err(Error::InvalidInput(format!("ground truth covers {} of {n} inputs", truth.ids.len())));
    }
    for (i, ids) in truth.ids.iter().enumerate() {
        if ids.len() != mu.sizes()[i] {
            return Err(Error::InvalidInput(format!(
                "ground truth for input {i} has {} ids, the input has {} nodes",
                ids.len(),
                mu.sizes()[i]
            )));
        }
    }
    if mu.is_empty() {
        return Err(Error::InvalidInput("empty matching".into()));
    }
    let (mut one, mut all) = (0usize, 0usize);
    for (t, _) in mu.iter() {
        let mut any_ok = false;
        let mut all_ok = true;
        for k in 0..n {
            for l in (k + 1)..n {
                if truth.ids[k][t[k]] == truth.ids[l][t[l]] {
                    any_ok = true;
                } else {
                    all_ok = false;
                }
            }
        }
        one += any_ok as usize;
        all += all_ok as usize;
    }
    let s = mu.len() as f64;
    Ok(NodeCorrectness { nc1: one as f64 / s, nc_all: all as f64 / s })
}

/// Monte-Carlo nearest-neighbor confusion matrix.
///
/// Each draw picks one random representative per class and classifies every
/// other item by its nearest representative (ties broken at random). Row `c`
/// is normalized by `iterations · (|c| − 1)`; a class with a single member
/// gets the unit row `e_c`. Draw `k` uses the seed `seed + k`.
pub fn nn_confusion(dist: ArrayView2<f64>, labels: &[usize], iterations: usize, seed: u64) -> Result<Array2<f64>> {
    let n = labels.len();
    if dist.dim() != (n, n) {
        return Err(Error::InvalidInput(format!("distance matrix is {:?} for {n} labels", dist.dim())));
    }
    if iterations == 0 {
        return Err(Error::InvalidInput("at least one iteration is required".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no items to classify".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (x, &c) in labels.iter().enumerate() {
        members[c].push(x);
    }
    if let Some(c) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::InvalidInput(format!("class {c} has no members")));
    }

    let draw = |k: usize| -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let reps: Vec<usize> = members.iter().map(|m| *m.choose(&mut rng).expect("non-empty")).collect();
        let mut counts = Array2::zeros((n_classes, n_classes));
        let mut ties = Vec::with_capacity(n_classes);
        for (x, &c) in labels.iter().enumerate() {
            if reps[c] == x {
                continue;
            }
            let mut best = f64::INFINITY;
            ties.clear();
            for (k, &r) in reps.iter().enumerate() {
                let d = dist[[x, r]];
                if d < best {
                    best = d;
                    ties.clear();
                    ties.push(k);
                } else if d == best {
                    ties.push(k);
                }
            }
            let pred = *ties.choose(&mut rng).unwrap_or(&c);
            counts[[c, pred]] += 1.0;
        }
        counts
    };
    let counts = (0..iterations)
        .into_par_iter()
        .map(draw)
        .reduce(|| Array2::zeros((n_classes, n_classes)), |a, b| a + b);

    let mut out = counts;
    for (c, m) in members.iter().enumerate() {
        let mut row = out.row_mut(c);
        if m.len() == 1 {
            row.fill(0.0);
            row[c] = 1.0;
        } else {
            row /= (iterations * (m.len() - 1)) as f64;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrePcc {
    pub mre: f64,
    /// NaN when either vector is constant.
    pub pcc: f64,
}

/// Mean relative error and Pearson correlation over the strict upper
/// triangle, skipping entries where the reference is zero.
pub fn mre_pcc(reference: ArrayView2<f64>, approx: ArrayView2<f64>) -> Result<MrePcc> {
    if reference.dim() != approx.dim() || reference.nrows() != reference.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrices must be square and of equal shape, got {:?} and {:?}",
            reference.dim(),
            approx.dim()
        )));
    }
    let n = reference.nrows();
    let mut r = Vec::new();
    let mut a = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if reference[[i, j]] != 0.0 {
                r.push(reference[[i, j]]);
                a.push(approx[[i, j]]);
            }
        }
    }
    if r.is_empty() {
        return Err(Error::InvalidInput("every off-diagonal reference entry is zero".into()));
    }
    let k = r.len() as f64;
    let mre = r.iter().zip(&a).map(|(r, a)| (a - r).abs() / r.abs()).sum::<f64>() / k;
    let pcc = if r == a && r.iter().any(|&v| v != r[0]) {
        1.0
    } else {
        let mr = r.iter().sum::<f64>() / k;
        let ma = a.iter().sum::<f64>() / k;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in r.iter().zip(&a) {
            sxy += (x - mr) * (y - ma);
            sxx += (x - mr) * (x - mr);
            syy += (y - ma) * (y - ma);
        }
        if sxx == 0.0 || syy == 0.0 {
            f64::NAN
        } else {
            (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
        }
    };
    Ok(MrePcc { mre, pcc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn truth_identity(n: usize, k: usize) -> GroundTruth {
        GroundTruth { ids: vec![(0..n).collect(); k] }
    }

    #[test]
    fn nc_examples() {
        let mu = MultiCoupling::diagonal(ndarray::Array1::from_elem(4, 0.25).view(), 3);
        let nc = node_correctness(&mu, &truth_identity(4, 3)).unwrap();
        assert_eq!((nc.nc1, nc.nc_all), (1.0, 1.0));

        let shifted = MultiCoupling::from_tuples(
            vec![4, 4, 4],
            (0..4).map(|x| (vec![x, (x + 1) % 4, (x + 2) % 4], 0.25)).collect(),
        )
        .unwrap();
        let nc = node_correctness(&shifted, &truth_identity(4, 3)).unwrap();
        assert_eq!((nc.nc1, nc.nc_all), (0.0, 0.0));

        // Two tuples with exactly one correct pair, none fully correct.
        let mixed = MultiCoupling::from_tuples(
            vec![4, 4, 4],
            vec![
                (vec![0, 0, 1], 0.25),
                (vec![1, 1, 2], 0.25),
                (vec![2, 3, 0], 0.25),
                (vec![3, 2, 3], 0.25),
            ],
        )
        .unwrap();
        let nc = node_correctness(&mixed, &truth_identity(4, 3)).unwrap();
        // (3,2,3) has the pair (0,2) correct as well.
        assert_eq!((nc.nc1, nc.nc_all), (0.75, 0.0));
        let two = MultiCoupling::from_tuples(
            vec![4, 4, 4],
            vec![
                (vec![0, 0, 1], 0.25),
                (vec![1, 1, 2], 0.25),
                (vec![2, 3, 0], 0.25),
                (vec![3, 0, 2], 0.25),
            ],
        )
        .unwrap();
        let nc = node_correctness(&two, &truth_identity(4, 3)).unwrap();
        assert_eq!((nc.nc1, nc.nc_all), (0.5, 0.0));
        assert!(node_correctness(&two, &truth_identity(4, 2)).is_err());
    }

    #[test]
    fn confusion_examples() {
        let labels = [0, 0, 0, 1, 1, 2, 2, 2];
        let d = Array2::<f64>::from_shape_fn((8, 8), |(i, j)| if labels[i] == labels[j] { 0.0 } else { 1.0 });
        let c = nn_confusion(d.view(), &labels, 50, 1).unwrap();
        assert_eq!(c, Array2::<f64>::eye(3));

        let flat = Array2::from_elem((8, 8), 1.0f64);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let c = nn_confusion(flat.view(), &labels, 10_000, 7).unwrap();
        for v in c.iter() {
            assert!((v - 0.5).abs() < 0.05, "{c}");
        }
        for row in c.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }

        let single = nn_confusion(array![[0.0]].view(), &[0], 3, 0).unwrap();
        assert_eq!(single, array![[1.0]]);
        assert!(nn_confusion(flat.view(), &[0, 0, 0, 0, 2, 2, 2, 2], 3, 0).is_err());
    }

    #[test]
    fn confusion_is_deterministic_and_permutation_consistent() {
        let labels = [0, 0, 1, 1, 1, 2, 2];
        let d = Array2::from_shape_fn((7, 7), |(i, j)| if labels[i] == labels[j] { 0.1 } else { 0.9 });
        let a = nn_confusion(d.view(), &labels, 100, 3).unwrap();
        assert_eq!(a, nn_confusion(d.view(), &labels, 100, 3).unwrap());
        let perm = [2, 0, 1];
        let relabeled: Vec<usize> = labels.iter().map(|&c| perm[c]).collect();
        let b = nn_confusion(d.view(), &relabeled, 100, 3).unwrap();
        for c in 0..3 {
            assert_eq!(a[[c, c]], 1.0);
            assert_eq!(b[[perm[c], perm[c]]], 1.0);
        }
    }

    #[test]
    fn mre_pcc_examples() {
        let r = array![[0.0, 1.0, 2.0], [1.0, 0.0, 4.0], [2.0, 4.0, 0.0]];
        assert_eq!(mre_pcc(r.view(), r.view()).unwrap(), MrePcc { mre: 0.0, pcc: 1.0 });
        let d = mre_pcc(r.view(), (&r * 2.0).view()).unwrap();
        assert_eq!(d.mre, 1.0);
        assert!((d.pcc - 1.0).abs() < 1e-15);
        // Hand case: ref (1, 2, 4), approx (1.5, 2, 3).
        let a = array![[0.0, 1.5, 2.0], [1.5, 0.0, 3.0], [2.0, 3.0, 0.0]];
        let v = mre_pcc(r.view(), a.view()).unwrap();
        assert!((v.mre - (0.5 + 0.0 + 0.25) / 3.0).abs() < 1e-15);
        // means 7/3 and 13/6; centered (-4/3, -1/3, 5/3) and (-2/3, -1/6, 5/6)
        // are proportional, so the correlation is one.
        assert!((v.pcc - 1.0).abs() < 1e-15);
        let b = array![[0.0, 3.0, 2.0], [3.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        let w = mre_pcc(r.view(), b.view()).unwrap();
        // centered ref (-4/3, -1/3, 5/3), centered b (1, 0, -1):
        // sxy = -3, sxx = 42/9, syy = 2.
        let expected = -3.0 / ((42.0f64 / 9.0).sqrt() * 2.0f64.sqrt());
        assert!((w.pcc - expected).abs() < 1e-15);
        assert!(mre_pcc(Array2::zeros((3, 3)).view(), r.view()).is_err());
    }
}

//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use gw_bary::{GaugeKind, GmSpace, TriMesh};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform point cloud in `[-1, 1]^d` with the given coordinate gauge.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, kind: GaugeKind) -> GmSpace {
    let c = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    GmSpace::from_points(c, kind, None).unwrap()
}

/// A point cloud with a squared-Euclidean or Euclidean gauge. Both are
/// conditionally negative definite, so for uniform spaces of equal size the
/// GW optimum is attained at a permutation and exhaustive search certifies it.
pub fn random_cnd_cloud(rng: &mut ChaCha8Rng, n: usize) -> GmSpace {
    let d = rng.random_range(1..=3);
    let kind = if rng.random_bool(0.5) { GaugeKind::SqEuclid } else { GaugeKind::Euclid };
    random_cloud(rng, n, d, kind)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let w: Array1<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s = w.sum();
    let mut w = w / s;
    let d = 1.0 - w.sum();
    w[0] += d;
    w
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `p`, weights in `[0.5, 1.5)`.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    let mut present = vec![vec![false; n]; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(0.5..1.5)));
        present[u][v] = true;
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if !present[u][v] && rng.random_bool(p) {
                edges.push((u, v, rng.random_range(0.5..1.5)));
                present[u][v] = true;
            }
        }
    }
    edges
}

/// Randomly relabeled copies of a graph. Copy 0 keeps the original labels.
/// With `noise > 0`, each later copy loses that fraction of its edges and
/// gains as many random new ones. Returns the copies as adjacency-gauged
/// spaces and, per copy, the original node behind every copy node.
pub fn permuted_copies(
    rng: &mut ChaCha8Rng,
    n: usize,
    edges: &[(usize, usize, f64)],
    copies: usize,
    noise: f64,
) -> (Vec<GmSpace>, Vec<Vec<usize>>) {
    let mut spaces = Vec::new();
    let mut ids = Vec::new();
    for k in 0..copies {
        let mut perm: Vec<usize> = (0..n).collect();
        if k > 0 {
            perm.shuffle(rng);
        }
        let mut orig = vec![0; n];
        for (o, &c) in perm.iter().enumerate() {
            orig[c] = o;
        }
        let mut e: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v, w)| (perm[u], perm[v], w)).collect();
        if k > 0 && noise > 0.0 {
            let flips = (edges.len() as f64 * noise).round() as usize;
            for _ in 0..flips {
                let drop = rng.random_range(0..e.len());
                e.swap_remove(drop);
            }
            let mut added = 0;
            while added < flips {
                let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
                if u != v && !e.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u)) {
                    e.push((u, v, rng.random_range(0.5..1.5)));
                    added += 1;
                }
            }
        }
        spaces.push(GmSpace::from_graph(n, &e, GaugeKind::Custom, None).unwrap());
        ids.push(orig);
    }
    (spaces, ids)
}

/// Triangulated `rows × cols` grid over `[0, 1] × [0, 1]`, lifted by `z`.
pub fn grid_mesh(rows: usize, cols: usize, z: impl Fn(f64, f64) -> f64) -> TriMesh {
    let mut v = Array2::zeros((rows * cols, 3));
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (c as f64 / (cols - 1) as f64, r as f64 / (rows - 1) as f64);
            let k = r * cols + c;
            v[[k, 0]] = x;
            v[[k, 1]] = y;
            v[[k, 2]] = z(x, y);
        }
    }
    let mut faces = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let a = r * cols + c;
            faces.push([a, a + 1, a + cols]);
            faces.push([a + 1, a + cols + 1, a + cols]);
        }
    }
    TriMesh::new(v, faces).unwrap()
}

/// Random plan with random support pattern: north-west corner rule on
/// shuffled rows and columns.
pub fn random_sparse_plan(rng: &mut ChaCha8Rng, xi: &Array1<f64>, upsilon: &Array1<f64>) -> gw_bary::Coupling {
    let mut rows: Vec<usize> = (0..xi.len()).collect();
    let mut cols: Vec<usize> = (0..upsilon.len()).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    gw_bary::gluing::nw_corner_ordered(xi.view(), upsilon.view(), &rows, &cols).unwrap()
}

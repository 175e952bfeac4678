//! Finite gauged measure spaces.
//!
//! A [`GmSpace`] is a finite support with a symmetric gauge matrix and a
//! probability vector on the support. Gauges are built from ambient
//! coordinates, from weighted graphs (shortest-path distances or a
//! symmetrized adjacency matrix) or supplied directly.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2};
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// How the gauge of a space was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeKind {
    SqEuclid,
    Euclid,
    OneNorm,
    InnerProduct,
    DijkstraSq,
    Dijkstra,
    Custom,
}

impl GaugeKind {
    /// Whether the gauge is a function of ambient coordinates alone.
    pub fn is_pointwise(self) -> bool {
        matches!(
            self,
            GaugeKind::SqEuclid | GaugeKind::Euclid | GaugeKind::OneNorm | GaugeKind::InnerProduct
        )
    }

    pub fn is_geodesic(self) -> bool {
        matches!(self, GaugeKind::Dijkstra | GaugeKind::DijkstraSq)
    }
}

/// A finite gauged measure space.
///
/// Values are immutable after construction; every constructor returns a
/// space whose [`validate`](GmSpace::validate) report is empty.
#[derive(Clone, Debug)]
pub struct GmSpace {
    gauge: Array2<f64>,
    weights: Array1<f64>,
    coords: Option<Array2<f64>>,
    faces: Option<Vec<[usize; 3]>>,
    kind: GaugeKind,
    scale: f64,
    label: String,
}

impl GmSpace {
    /// Builds a space from an explicit gauge. The gauge must be symmetric up
    /// to rounding; it is stored exactly symmetric.
    pub fn new(gauge: Array2<f64>, weights: Option<Array1<f64>>, kind: GaugeKind) -> Result<Self> {
        let n = gauge.nrows();
        if n == 0 || gauge.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "gauge must be a non-empty square matrix, got {}x{}",
                gauge.nrows(),
                gauge.ncols()
            )));
        }
        let scale = gauge.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (gauge[[i, j]] - gauge[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "gauge asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let gauge = symmetrize(gauge.view());
        let weights = resolve_weights(n, weights)?;
        Self::finish(gauge, weights, None, kind)
    }

    /// Assembles a space without any checks. Use [`validate`](Self::validate)
    /// to inspect the result.
    pub fn from_raw(gauge: Array2<f64>, weights: Array1<f64>, kind: GaugeKind) -> Self {
        GmSpace {
            gauge,
            weights,
            coords: None,
            faces: None,
            kind,
            scale: 1.0,
            label: String::new(),
        }
    }

    /// Builds a space from ambient coordinates (one point per row).
    pub fn from_points(
        coords: Array2<f64>,
        kind: GaugeKind,
        weights: Option<Array1<f64>>,
    ) -> Result<Self> {
        let n = coords.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinates".into()));
        }
        let gauge = point_gauge(coords.view(), kind)?;
        let weights = resolve_weights(n, weights)?;
        Self::finish(gauge, weights, Some(coords), kind)
    }

    /// Builds a space from a weighted graph on `n_nodes` nodes.
    ///
    /// `Dijkstra` and `DijkstraSq` treat edges as undirected and use
    /// all-pairs shortest paths. `Custom` reads `edges` as a directed
    /// adjacency matrix `M[u][v] = w` and uses `(M + Mᵀ) / 2`.
    pub fn from_graph(
        n_nodes: usize,
        edges: &[(usize, usize, f64)],
        kind: GaugeKind,
        weights: Option<Array1<f64>>,
    ) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidInput("graph has no nodes".into()));
        }
        for &(u, v, w) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidInput(format!(
                    "edge ({u}, {v}) references a node outside 0..{n_nodes}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) has non-finite weight")));
            }
        }
        let gauge = match kind {
            GaugeKind::Dijkstra | GaugeKind::DijkstraSq => {
                let mut d = shortest_paths(n_nodes, edges)?;
                if kind == GaugeKind::DijkstraSq {
                    d.mapv_inplace(|v| v * v);
                }
                d
            }
            GaugeKind::Custom => {
                let mut m = Array2::zeros((n_nodes, n_nodes));
                for &(u, v, w) in edges {
                    m[[u, v]] = w;
                }
                symmetrize(m.view())
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "gauge kind {other:?} cannot be built from a graph"
                )))
            }
        };
        let weights = resolve_weights(n_nodes, weights)?;
        Self::finish(gauge, weights, None, kind)
    }

    /// Builds a space from a triangle mesh. Geodesic kinds use shortest paths
    /// along face edges weighted by their Euclidean length.
    pub fn from_mesh(mesh: &crate::mesh::TriMesh, kind: GaugeKind) -> Result<Self> {
        let space = if kind.is_geodesic() {
            let edges = mesh.edges();
            Self::from_graph(mesh.vertices.nrows(), &edges, kind, None)?
                .with_coords(mesh.vertices.clone())?
        } else {
            Self::from_points(mesh.vertices.clone(), kind, None)?
        };
        space.with_faces(mesh.faces.clone())
    }

    fn finish(
        gauge: Array2<f64>,
        weights: Array1<f64>,
        coords: Option<Array2<f64>>,
        kind: GaugeKind,
    ) -> Result<Self> {
        let space = GmSpace {
            gauge,
            weights,
            coords,
            faces: None,
            kind,
            scale: 1.0,
            label: String::new(),
        };
        let report = space.validate();
        if report.is_empty() {
            Ok(space)
        } else {
            Err(Error::InvalidInput(report.join("; ")))
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Attaches ambient coordinates without touching the gauge.
    pub fn with_coords(mut self, coords: Array2<f64>) -> Result<Self> {
        if coords.nrows() != self.len() {
            return Err(Error::InvalidInput(format!(
                "{} coordinate rows for a space of size {}",
                coords.nrows(),
                self.len()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_faces(mut self, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = self.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&v| v >= n)) {
            return Err(Error::InvalidInput(format!("face {f:?} out of range for {n} points")));
        }
        self.faces = Some(faces);
        Ok(self)
    }

    /// Replaces the weights; they must form a probability vector.
    pub fn with_weights(mut self, weights: Array1<f64>) -> Result<Self> {
        self.weights = resolve_weights(self.len(), Some(weights))?;
        Ok(self)
    }

    /// Rescales the gauge so that its largest absolute entry is one.
    pub fn normalize_diameter(&self) -> Result<Self> {
        let max = self.gauge.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return Err(Error::DegenerateGauge);
        }
        let mut out = self.clone();
        if max != 1.0 {
            out.gauge.mapv_inplace(|v| v / max);
            out.scale /= max;
        }
        Ok(out)
    }

    /// Lists every violated invariant. An empty report means the space is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut report = Vec::new();
        let n = self.weights.len();
        if self.gauge.nrows() != n || self.gauge.ncols() != n {
            report.push(format!(
                "gauge shape {}x{} does not match {} weights",
                self.gauge.nrows(),
                self.gauge.ncols(),
                n
            ));
            return report;
        }
        if n == 0 {
            report.push("space is empty".into());
            return report;
        }
        if self.gauge.iter().any(|v| !v.is_finite()) {
            report.push("gauge has non-finite entries".into());
        } else if (0..n).any(|i| (0..i).any(|j| self.gauge[[i, j]] != self.gauge[[j, i]])) {
            report.push("gauge asymmetric".into());
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            report.push("weights negative or non-finite".into());
        }
        let total: f64 = self.weights.sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            report.push(format!("weights not normalized (sum = {total})"));
        }
        if let Some(c) = &self.coords {
            if c.nrows() != n {
                report.push("coordinate rows do not match support size".into());
            }
        }
        report
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn gauge(&self) -> &Array2<f64> {
        &self.gauge
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn coords(&self) -> Option<&Array2<f64>> {
        self.coords.as_ref()
    }

    pub fn faces(&self) -> Option<&[[usize; 3]]> {
        self.faces.as_deref()
    }

    pub fn kind(&self) -> GaugeKind {
        self.kind
    }

    /// Factor applied to the coordinate-derived gauge (set by diameter normalization).
    pub fn gauge_scale(&self) -> f64 {
        self.scale
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True when all weights equal `1/n` up to `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= tol)
    }

    /// Same gauge and weights (coordinates and labels are ignored).
    pub fn same_measure_space(&self, other: &GmSpace) -> bool {
        self.gauge == other.gauge && self.weights == other.weights
    }
}

fn resolve_weights(n: usize, weights: Option<Array1<f64>>) -> Result<Array1<f64>> {
    match weights {
        None => Ok(Array1::from_elem(n, 1.0 / n as f64)),
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} weights for a support of size {n}",
                    w.len()
                )));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
            }
            let total = w.sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
            }
            Ok(w)
        }
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: ArrayView2<f64>) -> Array2<f64> {
    let n = m.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            m[[i, i]]
        } else {
            0.5 * (m[[i, j]] + m[[j, i]])
        }
    })
}

/// Pairwise gauge of a point cloud for the coordinate-based kinds.
pub fn point_gauge(coords: ArrayView2<f64>, kind: GaugeKind) -> Result<Array2<f64>> {
    let n = coords.nrows();
    let f: fn(ndarray::ArrayView1<f64>, ndarray::ArrayView1<f64>) -> f64 = match kind {
        GaugeKind::SqEuclid => |a, b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        GaugeKind::Euclid => {
            |a, b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        }
        GaugeKind::OneNorm => |a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        GaugeKind::InnerProduct => |a, b| a.dot(&b),
        other => {
            return Err(Error::InvalidInput(format!(
                "gauge kind {other:?} cannot be computed from coordinates alone"
            )))
        }
    };
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = f(coords.row(i), coords.row(j));
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    Ok(g)
}

/// All-pairs shortest path lengths of an undirected graph with nonnegative
/// edge weights. Parallel edges keep the lightest weight.
pub fn shortest_paths(n: usize, edges: &[(usize, usize, f64)]) -> Result<Array2<f64>> {
    let mut lightest: HashMap<(usize, usize), f64> = HashMap::new();
    for &(u, v, w) in edges {
        if w < 0.0 {
            return Err(Error::InvalidInput(format!("edge ({u}, {v}) has negative weight {w}")));
        }
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        let entry = lightest.entry(key).or_insert(w);
        *entry = entry.min(w);
    }
    let mut graph: UnGraph<(), f64> = UnGraph::with_capacity(n, lightest.len());
    for _ in 0..n {
        graph.add_node(());
    }
    let mut sorted: Vec<_> = lightest.into_iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    for ((u, v), w) in sorted {
        graph.add_edge(NodeIndex::new(u), NodeIndex::new(v), w);
    }

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let dist = petgraph::algo::dijkstra(&graph, NodeIndex::new(s), None, |e| *e.weight());
            let mut row = vec![f64::INFINITY; n];
            for (node, d) in dist {
                row[node.index()] = d;
            }
            match row.iter().position(|d| d.is_infinite()) {
                Some(t) => Err(Error::Disconnected { from: s, to: t }),
                None => Ok(row),
            }
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            d[[i, j]] = v;
        }
    }
    // Dijkstra from both ends can differ in the last ulp.
    Ok(symmetrize(d.view()))
}

//! Euclidean embeddings of barycenters over coordinate-gauged inputs, PCA
//! projection and face transfer for mesh output.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::barycenter::{check_rho, BarycenterState};
use crate::error::{Error, Result};
use crate::gluing::MultiCoupling;
use crate::gmspace::{point_gauge, GaugeKind, GmSpace};
use crate::mesh::TriMesh;

/// Gauges whose mean over a product of Euclidean spaces is again such a gauge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedKind {
    OneNorm,
    SqEuclid,
    InnerProduct,
}

impl EmbedKind {
    pub fn gauge_kind(self) -> GaugeKind {
        match self {
            EmbedKind::OneNorm => GaugeKind::OneNorm,
            EmbedKind::SqEuclid => GaugeKind::SqEuclid,
            EmbedKind::InnerProduct => GaugeKind::InnerProduct,
        }
    }

    /// Per-block coordinate factor for weight `r` and gauge scale `c`.
    fn block_factor(self, r: f64, c: f64) -> f64 {
        match self {
            EmbedKind::OneNorm => r * c,
            EmbedKind::SqEuclid | EmbedKind::InnerProduct => (r * c).sqrt(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmbeddedBarycenter {
    /// One row per support tuple of the melting, `Σ d_i` columns.
    pub points: Array2<f64>,
    /// Centered points in the top principal directions (3 columns).
    pub projected: Array2<f64>,
    pub masses: Array1<f64>,
    pub faces: Option<Vec<[usize; 3]>>,
    /// Mean distance between points and their projection.
    pub pca_residual: f64,
    /// Largest pairwise Euclidean distance of `points`.
    pub diameter: f64,
}

impl EmbeddedBarycenter {
    /// Largest entrywise gap between the gauge of the embedded points and `mean`.
    pub fn gauge_residual(&self, mean: &GmSpace, kind: EmbedKind) -> Result<f64> {
        if mean.len() != self.points.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} embedded points for a space of size {}",
                self.points.nrows(),
                mean.len()
            )));
        }
        let g = point_gauge(self.points.view(), kind.gauge_kind())?;
        Ok(g.iter().zip(mean.gauge().iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// The projected points as a mesh; requires faces.
    pub fn to_mesh(&self) -> Result<TriMesh> {
        let faces = self
            .faces
            .clone()
            .ok_or_else(|| Error::Precondition("no faces were transferred to the barycenter".into()))?;
        TriMesh::new(self.projected.clone(), faces)
    }
}

fn embed_points(inputs: &[GmSpace], mu: &MultiCoupling, factors: &[f64]) -> Result<Array2<f64>> {
    let mut dims = Vec::with_capacity(inputs.len());
    for (i, x) in inputs.iter().enumerate() {
        let c = x
            .coords()
            .ok_or_else(|| Error::Precondition(format!("input {i} has no coordinates to embed")))?;
        dims.push(c.ncols());
    }
    let total: usize = dims.iter().sum();
    let mut points = Array2::zeros((mu.len(), total));
    for (s, (tuple, _)) in mu.iter().enumerate() {
        let mut off = 0;
        for (i, x) in inputs.iter().enumerate() {
            let c = x.coords().expect("checked above");
            let f = factors[i];
            for k in 0..dims[i] {
                points[[s, off + k]] = f * c[[tuple[i], k]];
            }
            off += dims[i];
        }
    }
    Ok(points)
}

fn finish(points: Array2<f64>, mu: &MultiCoupling) -> Result<EmbeddedBarycenter> {
    let (projected, pca_residual) = pca_project(points.view(), 3)?;
    let diameter = max_distance(points.view());
    Ok(EmbeddedBarycenter {
        points,
        projected,
        masses: Array1::from(mu.masses().to_vec()),
        faces: None,
        pca_residual,
        diameter,
    })
}

/// Embeds the barycenter `(supp μ, m_ρ, μ)` isometrically into `R^{Σ d_i}`.
///
/// Every input must carry coordinates and a gauge of the matching kind.
pub fn euclid_embed(state: &BarycenterState, rho: ArrayView1<f64>, kind: EmbedKind) -> Result<EmbeddedBarycenter> {
    check_rho(rho, state.inputs.len())?;
    for (i, x) in state.inputs.iter().enumerate() {
        if x.kind() != kind.gauge_kind() {
            return Err(Error::Precondition(format!(
                "input {i} has a {:?} gauge; the {kind:?} embedding needs {:?}",
                x.kind(),
                kind.gauge_kind()
            )));
        }
    }
    let factors: Vec<f64> = state
        .inputs
        .iter()
        .zip(rho.iter())
        .map(|(x, &r)| kind.block_factor(r, x.gauge_scale()))
        .collect();
    finish(embed_points(&state.inputs, &state.melting, &factors)?, &state.melting)
}

/// Plotting variant: treats every input as if it were squared-Euclidean on
/// its coordinates, whatever its actual gauge. Not an isometry in general.
pub fn euclid_embed_heuristic(state: &BarycenterState, rho: ArrayView1<f64>) -> Result<EmbeddedBarycenter> {
    check_rho(rho, state.inputs.len())?;
    let factors: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    finish(embed_points(&state.inputs, &state.melting, &factors)?, &state.melting)
}

fn max_distance(points: ArrayView2<f64>) -> f64 {
    let k = points.nrows();
    let mut best = 0.0f64;
    for a in 0..k {
        for b in (a + 1)..k {
            let d: f64 = points.row(a).iter().zip(points.row(b)).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}

/// Centers the points, projects onto the top `target_dim` principal
/// directions and reports the mean distance to the original points. The
/// output always has `target_dim` columns (zero-padded if needed).
pub fn pca_project(points: ArrayView2<f64>, target_dim: usize) -> Result<(Array2<f64>, f64)> {
    let (k, d) = points.dim();
    if k == 0 {
        return Err(Error::InvalidInput("cannot project an empty point set".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("points have non-finite coordinates".into()));
    }
    let mean = points.mean_axis(ndarray::Axis(0)).expect("k > 0");
    let centered = &points - &mean;
    let cov = centered.t().dot(&centered);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep = target_dim.min(d);
    let basis = Array2::from_shape_fn((d, keep), |(i, c)| eig.eigenvectors[(i, order[c])]);
    let coords = centered.dot(&basis);
    let back = coords.dot(&basis.t());
    let residual = (&centered - &back)
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .sum::<f64>()
        / k as f64;
    let mut projected = Array2::zeros((k, target_dim));
    projected.slice_mut(s![.., ..keep]).assign(&coords);
    Ok((projected, residual))
}

/// Faces on the support of `μ`: every triple of support tuples whose
/// `anchor` components form a face of the anchor input.
pub fn transfer_faces(mu: &MultiCoupling, anchor: usize, faces: &[[usize; 3]]) -> Result<Vec<[usize; 3]>> {
    if anchor >= mu.n_marginals() {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor} out of range for {} inputs",
            mu.n_marginals()
        )));
    }
    let n = mu.sizes()[anchor];
    let mut fibers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, (t, _)) in mu.iter().enumerate() {
        fibers[t[anchor]].push(s);
    }
    let mut out = Vec::new();
    for f in faces {
        if f.iter().any(|&v| v >= n) {
            return Err(Error::InvalidInput(format!("face {f:?} out of range for {n} points")));
        }
        for &a in &fibers[f[0]] {
            for &b in &fibers[f[1]] {
                for &c in &fibers[f[2]] {
                    out.push([a, b, c]);
                }
            }
        }
    }
    Ok(out)
}

/// [`euclid_embed`] (or the heuristic variant) plus faces from the anchor input.
pub fn embed_with_faces(
    state: &BarycenterState,
    rho: ArrayView1<f64>,
    kind: Option<EmbedKind>,
    anchor: usize,
) -> Result<EmbeddedBarycenter> {
    let mut e = match kind {
        Some(k) => euclid_embed(state, rho, k)?,
        None => euclid_embed_heuristic(state, rho)?,
    };
    let x = state
        .inputs
        .get(anchor)
        .ok_or_else(|| Error::InvalidInput(format!("anchor {anchor} out of range")))?;
    if let Some(f) = x.faces() {
        e.faces = Some(transfer_faces(&state.melting, anchor, f)?);
    }
    Ok(e)
}

//! Closed-form multi-marginal plans and barycenters of centered Gaussians
//! under the inner-product gauge.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::barycenter::check_rho;
use crate::error::{Error, Result};

/// `N(0, Σ)` on `R^d` together with `Σ = P D Pᵀ` (eigenvalues decreasing)
/// and a diagonal sign choice.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpace {
    covariance: Array2<f64>,
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
    signs: Array1<f64>,
}

fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

impl GaussianSpace {
    /// Diagonalizes a symmetric positive definite covariance.
    pub fn new(covariance: Array2<f64>) -> Result<Self> {
        let (d, c) = covariance.dim();
        if d != c || d == 0 {
            return Err(Error::InvalidInput(format!("covariance must be square and non-empty, got {d}x{c}")));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        let eig = SymmetricEigen::new(to_nalgebra(covariance.view()));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Array1<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        if !(eigenvalues[d - 1] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "covariance is not positive definite (smallest eigenvalue {})",
                eigenvalues[d - 1]
            )));
        }
        let eigenvectors = Array2::from_shape_fn((d, d), |(i, k)| eig.eigenvectors[(i, order[k])]);
        Ok(GaussianSpace { covariance, eigenvalues, eigenvectors, signs: Array1::ones(d) })
    }

    /// Builds the space from `P` and decreasing positive eigenvalues.
    pub fn from_eigen(eigenvalues: Array1<f64>, eigenvectors: Array2<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 || eigenvectors.dim() != (d, d) {
            return Err(Error::InvalidInput("eigenvector matrix must be d x d for d eigenvalues".into()));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("eigenvalues must be positive".into()));
        }
        if eigenvalues.windows(2).into_iter().any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("eigenvalues must be sorted in decreasing order".into()));
        }
        let mut covariance = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                covariance[[i, j]] = (0..d).map(|k| eigenvectors[[i, k]] * eigenvalues[k] * eigenvectors[[j, k]]).sum();
            }
        }
        Ok(GaussianSpace { covariance, eigenvalues, eigenvectors, signs: Array1::ones(d) })
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        GaussianSpace::new(Array2::from_diag(&Array1::from(variances.to_vec())))
    }

    /// Replaces the default all-`+1` sign choice.
    pub fn with_signs(mut self, signs: Array1<f64>) -> Result<Self> {
        if signs.len() != self.dim() || signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidInput(format!("signs must be {} entries of +1 or -1", self.dim())));
        }
        self.signs = signs;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn signs(&self) -> &Array1<f64> {
        &self.signs
    }
}

/// Maps `A_i` in eigen-coordinates plus the residual of the pairwise
/// composition check `B_ij A_i = A_j`.
#[derive(Clone, Debug)]
pub struct GaussianMultiPlan {
    /// `A_i`, of shape `d_i × d_1`.
    pub maps: Vec<Array2<f64>>,
    /// `T_i = P_i A_i P_1ᵀ` in ambient coordinates.
    pub transport_maps: Vec<Array2<f64>>,
    /// Largest entrywise `|B_ij A_i − A_j|` over `i ≤ j`.
    pub composition_residual: f64,
}

fn check_sorted_dims(gaussians: &[GaussianSpace]) -> Result<()> {
    if gaussians.is_empty() {
        return Err(Error::InvalidInput("at least one Gaussian is required".into()));
    }
    if gaussians.windows(2).any(|w| w[0].dim() < w[1].dim()) {
        return Err(Error::InvalidInput("dimensions must be sorted in decreasing order".into()));
    }
    Ok(())
}

/// `(Ĩ_{d_out} · extra · D_num^{1/2} (D_den^{(d_out)})^{-1/2} | 0)`, shape `d_out × d_den`.
fn scaled_block(signs: ArrayView1<f64>, extra: Option<ArrayView1<f64>>, num: ArrayView1<f64>, den: ArrayView1<f64>) -> Array2<f64> {
    let d_out = num.len();
    let mut a = Array2::zeros((d_out, den.len()));
    for k in 0..d_out {
        let s = signs[k] * extra.map_or(1.0, |e| e[k]);
        a[[k, k]] = s * num[k].sqrt() / den[k].sqrt();
    }
    a
}

/// Optimal multi-marginal plan `(T_1, …, T_N)_# ξ_1` between centered
/// Gaussians, sorted by decreasing dimension.
pub fn gaussian_multi_plan(gaussians: &[GaussianSpace]) -> Result<GaussianMultiPlan> {
    check_sorted_dims(gaussians)?;
    let first = &gaussians[0];
    let d1 = first.dim();
    let maps: Vec<Array2<f64>> = gaussians
        .iter()
        .map(|g| scaled_block(g.signs.view(), None, g.eigenvalues.view(), first.eigenvalues.view()))
        .collect();
    let transport_maps = gaussians
        .iter()
        .zip(&maps)
        .map(|(g, a)| g.eigenvectors.dot(a).dot(&first.eigenvectors.t()))
        .collect();
    let mut residual = 0.0f64;
    for (i, gi) in gaussians.iter().enumerate() {
        for (j, gj) in gaussians.iter().enumerate().skip(i) {
            let dj = gj.dim();
            let b = scaled_block(
                gj.signs.view(),
                Some(gi.signs.slice(ndarray::s![..dj])),
                gj.eigenvalues.view(),
                gi.eigenvalues.view(),
            );
            let ba = b.dot(&maps[i]);
            debug_assert_eq!(ba.dim(), (dj, d1));
            for (x, y) in ba.iter().zip(maps[j].iter()) {
                residual = residual.max((x - y).abs());
            }
        }
    }
    Ok(GaussianMultiPlan { maps, transport_maps, composition_residual: residual })
}

/// The barycenter `N(0, Σ ρ_i blockdiag(D_i, 0))` on `R^{d_1}`, written in the
/// eigenbasis of the first input (so its eigenvectors are the identity).
pub fn gaussian_barycenter(gaussians: &[GaussianSpace], rho: ArrayView1<f64>) -> Result<GaussianSpace> {
    check_sorted_dims(gaussians)?;
    check_rho(rho, gaussians.len())?;
    let d1 = gaussians[0].dim();
    let mut diag = Array1::zeros(d1);
    for (g, &r) in gaussians.iter().zip(rho.iter()) {
        for k in 0..g.dim() {
            diag[k] += r * g.eigenvalues[k];
        }
    }
    // Decreasing order survives the weighted sum; zero trailing entries only
    // appear when every input of full dimension has zero weight.
    if diag.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Precondition(
            "the barycenter covariance is degenerate; give positive weight to a full-dimensional input".into(),
        ));
    }
    GaussianSpace::from_eigen(diag, Array2::eye(d1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> GaussianSpace {
        let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        let mut c = a.dot(&a.t());
        for k in 0..d {
            c[[k, k]] += 0.5;
        }
        GaussianSpace::new(c).unwrap()
    }

    #[test]
    fn scalar_example() {
        let g1 = GaussianSpace::diagonal(&[4.0, 1.0]).unwrap();
        let g2 = GaussianSpace::diagonal(&[9.0]).unwrap();
        let plan = gaussian_multi_plan(&[g1.clone(), g2.clone()]).unwrap();
        assert_eq!(plan.maps[1], array![[1.5, 0.0]]);
        assert!(plan.composition_residual <= 1e-12);
        let b = gaussian_barycenter(&[g1, g2], array![0.5, 0.5].view()).unwrap();
        assert_eq!(b.covariance(), &array![[6.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn one_dimensional_barycenter() {
        let g = [GaussianSpace::diagonal(&[4.0]).unwrap(), GaussianSpace::diagonal(&[1.0]).unwrap()];
        let b = gaussian_barycenter(&g, array![0.5, 0.5].view()).unwrap();
        assert_eq!(b.covariance()[[0, 0]], 2.5);
    }

    #[test]
    fn equal_covariances_give_identity_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_spd(&mut rng, 4);
        let plan = gaussian_multi_plan(&[g.clone(), g.clone(), g.clone()]).unwrap();
        for a in &plan.maps {
            assert!(a.iter().zip(Array2::<f64>::eye(4).iter()).all(|(x, y)| (x - y).abs() < 1e-15));
        }
    }

    #[test]
    fn vertex_weight_returns_first_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = [random_spd(&mut rng, 3), random_spd(&mut rng, 2)];
        let b = gaussian_barycenter(&g, array![1.0, 0.0].view()).unwrap();
        assert_eq!(b.eigenvalues(), g[0].eigenvalues());
    }

    #[test]
    fn composition_identity_on_random_batteries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut dims: Vec<usize> = (0..3).map(|_| rng.random_range(1..=6)).collect();
            dims.sort_unstable_by(|a, b| b.cmp(a));
            let g: Vec<GaussianSpace> = dims
                .iter()
                .map(|&d| {
                    let s: Array1<f64> = (0..d).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
                    random_spd(&mut rng, d).with_signs(s).unwrap()
                })
                .collect();
            let plan = gaussian_multi_plan(&g).unwrap();
            assert!(plan.composition_residual <= 1e-12, "{}", plan.composition_residual);
            // T_i pushes Σ_1 to Σ_i.
            for (t, gi) in plan.transport_maps.iter().zip(&g) {
                let pushed = t.dot(g[0].covariance()).dot(&t.t());
                let err = (&pushed - gi.covariance()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err < 1e-10, "{err}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GaussianSpace::new(array![[1.0, 0.0], [0.0, -1.0]]).is_err());
        assert!(GaussianSpace::new(array![[1.0, 0.5], [0.0, 1.0]]).is_err());
        assert!(GaussianSpace::from_eigen(array![1.0, 2.0], Array2::eye(2)).is_err());
        let g = [GaussianSpace::diagonal(&[1.0]).unwrap(), GaussianSpace::diagonal(&[1.0, 1.0]).unwrap()];
        assert!(gaussian_multi_plan(&g).is_err());
    }
}

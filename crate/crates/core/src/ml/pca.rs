use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero rank.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// Orthonormal rows, `n_components × n_features`.
    pub components: DMatrix<f64>,
    /// Population variance along each component, descending.
    pub explained_variance: DVector<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Share of the total variance carried by each component.
    pub fn explained_ratio(&self, total_variance: f64) -> Vec<f64> {
        self.explained_variance.iter().map(|v| if total_variance > 0.0 { v / total_variance } else { 0.0 }).collect()
    }
}

fn centered(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / m));
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (mean, xc)
}

/// Sum of population variances of the columns of `x`.
pub fn total_variance(x: &DMatrix<f64>) -> f64 {
    let (_, xc) = centered(x);
    xc.norm_squared() / x.nrows() as f64
}

/// Principal axes of the population covariance `Σ = XcᵀXc / m`.
///
/// When there are more features than samples the eigenproblem is solved on the
/// `m × m` Gram matrix `XcXcᵀ / m`, which has the same non-zero spectrum, and the
/// axes are recovered as `Xcᵀu / √(mλ)`. Components beyond the numerical rank are
/// dropped with a warning. Each axis is signed so its largest-magnitude entry is positive.
pub fn pca_fit(x: &DMatrix<f64>, n_components: usize) -> Result<PcaModel> {
    let (m, p) = x.shape();
    if m < 2 {
        return Err(Error::domain("PCA needs at least two rows"));
    }
    if n_components == 0 || n_components > m.min(p) {
        return Err(Error::domain(format!(
            "n_components = {n_components} must lie in 1..={}",
            m.min(p)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("feature matrix contains non-finite values"));
    }
    let (mean, xc) = centered(x);
    let mf = m as f64;
    let gram = p > m;
    let cov = if gram { &xc * xc.transpose() / mf } else { xc.transpose() * &xc / mf };
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order.iter().take_while(|&&k| eig.eigenvalues[k] > RANK_TOL * top && top > 0.0).count();
    let keep = n_components.min(rank.max(1));
    if keep < n_components {
        log::warn!("pca_fit: requested {n_components} components, data rank is {rank}; keeping {keep}");
    }

    let mut components = DMatrix::zeros(keep, p);
    let mut variance = DVector::zeros(keep);
    for (r, &k) in order.iter().take(keep).enumerate() {
        let lam = eig.eigenvalues[k].max(0.0);
        let u = eig.eigenvectors.column(k);
        let mut v: DVector<f64> = if gram {
            let w = xc.transpose() * u;
            let n = w.norm();
            if n > 0.0 { w / n } else { w }
        } else {
            u.into_owned()
        };
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.neg_mut();
        }
        components.set_row(r, &v.transpose());
        variance[r] = lam;
    }
    Ok(PcaModel { mean, components, explained_variance: variance })
}

/// `(X − mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.n_features() {
        return Err(Error::domain(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            model.n_features()
        )));
    }
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-model.mean[j]);
    }
    Ok(xc * model.components.transpose())
}

/// `Y · components + mean`.
pub fn pca_inverse(model: &PcaModel, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y.ncols() != model.n_components() {
        return Err(Error::domain(format!(
            "input has {} columns, model has {} components",
            y.ncols(),
            model.n_components()
        )));
    }
    let mut x = y * &model.components;
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(model.mean[j]);
    }
    Ok(x)
}

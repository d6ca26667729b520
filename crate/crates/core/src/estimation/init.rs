use nalgebra::{DMatrix, DVector};

use crate::error::{FaError, Result};
use crate::linalg::sym_eigen_desc;
use crate::missing::{mean_impute, observed_means, MaskedMatrix};
use crate::model::{FactorParams, ModelDims};

/// PCA starting value computed from the mean-imputed sample covariance.
///
/// With `(lambda_j, u_j)` the eigenpairs of the covariance (divisor `N`) and
/// `psi_bar` the mean of the trailing `d - k` eigenvalues, loadings are
/// `u_j * sqrt(max(lambda_j - psi_bar, 0))` and uniquenesses the floored
/// residual diagonal.
pub fn init_pca(data: &MaskedMatrix, k: usize, eta: f64) -> Result<FactorParams> {
    let d = data.ncols();
    ModelDims::new(d, k)?;
    if !(eta > 0.0) {
        return Err(FaError::Config(format!("eta must be positive, got {eta}")));
    }
    let mu = DVector::from_vec(observed_means(data)?);
    let imputed = mean_impute(data)?;
    let s0 = centered_cov(&imputed, &mu);

    let (values, vectors) = sym_eigen_desc(&s0);
    let psi_bar = values.rows(k, d - k).mean();
    let mut loadings = DMatrix::zeros(d, k);
    for j in 0..k {
        let scale = (values[j] - psi_bar).max(0.0).sqrt();
        loadings.set_column(j, &(vectors.column(j) * scale));
    }
    let psi = DVector::from_fn(d, |i, _| {
        let common: f64 = loadings.row(i).norm_squared();
        (s0[(i, i)] - common).max(eta)
    });
    FactorParams::new(mu, loadings, psi)
}

fn centered_cov(x: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mu.transpose();
    }
    c.tr_mul(&c) / n
}

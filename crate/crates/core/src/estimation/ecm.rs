//! ECM with the latent factors as the only missing data. Each variable's
//! `(mu_i, a_i, psi_i)` is updated from the `N_i` rows in which it is observed.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{run_iterations, FitConfig, FitResult};
use crate::error::{FaError, Result};
use crate::missing::MaskedMatrix;
use crate::model::{check_data_dims, pattern_factors, FactorParams, PatternFactor};

/// Posterior mean and covariance of the factors given a row's observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl PosteriorMoments {
    /// `E[z z' | x_o] = E[z|x_o] E[z|x_o]' + Sigma_z`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.mean * self.mean.transpose() + &self.cov
    }
}

/// `Sigma_z = (sum_{i in O} a_i a_i' / psi_i + I)^{-1}` and
/// `E[z | x_o] = Sigma_z sum_{i in O} a_i (x_i - mu_i) / psi_i`.
///
/// `observed` lists the observed variable indices and `x_obs` their values in
/// the same order. An empty index set yields the prior `(0, I)`.
pub fn ecm_posterior_moments(
    params: &FactorParams,
    observed: &[usize],
    x_obs: &[f64],
) -> Result<PosteriorMoments> {
    let d = params.dims().d;
    if observed.len() != x_obs.len() {
        return Err(FaError::DimensionMismatch(format!(
            "{} indices for {} observed values",
            observed.len(),
            x_obs.len()
        )));
    }
    if let Some(&bad) = observed.iter().find(|&&i| i >= d) {
        return Err(FaError::IndexOutOfRange { index: bad, d });
    }
    let factor = PatternFactor::new(params, observed)?;
    let r = DVector::from_iterator(
        observed.len(),
        observed.iter().zip(x_obs).map(|(&i, &x)| x - params.mu()[i]),
    );
    let k = params.dims().k;
    let cov = if k == 0 {
        DMatrix::zeros(0, 0)
    } else {
        factor.post_cov.clone()
    };
    let mean = if k == 0 {
        DVector::zeros(0)
    } else {
        factor.posterior_mean(&r)
    };
    Ok(PosteriorMoments { mean, cov })
}

/// One ECM iteration: E-step, then `mu` per variable, then `(a_i, psi_i)` per
/// variable with `psi_i` floored at `eta`.
pub fn ecm_step(data: &MaskedMatrix, params: &FactorParams, eta: f64) -> Result<FactorParams> {
    check_data_dims(params, data)?;
    let factors = pattern_factors(params, data)?;
    ecm_step_with(data, params, &factors, eta)
}

pub(crate) fn ecm_step_with(
    data: &MaskedMatrix,
    params: &FactorParams,
    factors: &[PatternFactor],
    eta: f64,
) -> Result<FactorParams> {
    let (n, d) = (data.nrows(), data.ncols());
    let k = params.dims().k;
    let a = params.loadings();
    let counts = data.n_obs_per_var();
    if let Some(variable) = counts.iter().position(|&c| c == 0) {
        return Err(FaError::UnobservedVariable { variable });
    }

    // E-step: posterior means per row, per-variable sums of second moments.
    let mut ez = DMatrix::<f64>::zeros(n, k);
    let mut moment_sums = vec![DMatrix::<f64>::zeros(k, k); d];
    for (pattern, factor) in data.patterns().iter().zip(factors) {
        if pattern.is_empty() {
            continue;
        }
        let mut second = if k == 0 {
            DMatrix::zeros(0, 0)
        } else {
            &factor.post_cov * pattern.rows.len() as f64
        };
        if k > 0 {
            let r = factor.residual_block(data, &pattern.rows, params.mu());
            let means = factor.posterior_mean_block(&r);
            second += means.tr_mul(&means);
            for (j, &row) in pattern.rows.iter().enumerate() {
                ez.set_row(row, &means.row(j));
            }
        }
        for &i in &pattern.observed {
            moment_sums[i] += &second;
        }
    }

    // CM-step 1: mu_i = mean over O_i of (x_ni - a_i' E[z_n]).
    let mut mu = DVector::<f64>::zeros(d);
    for i in 0..d {
        let a_i = a.row(i);
        let mut acc = 0.0;
        for row in 0..n {
            if let Some(x) = data.get(row, i) {
                acc += x - a_i.dot(&ez.row(row));
            }
        }
        mu[i] = acc / counts[i] as f64;
    }

    // CM-step 2: a_i and psi_i given the new mean.
    let mut loadings = DMatrix::<f64>::zeros(d, k);
    let mut psi = DVector::<f64>::zeros(d);
    for i in 0..d {
        let mut cross = DVector::<f64>::zeros(k);
        let mut sq = 0.0;
        for row in 0..n {
            if let Some(x) = data.get(row, i) {
                let c = x - mu[i];
                sq += c * c;
                if k > 0 {
                    cross.axpy(c, &ez.row(row).transpose(), 1.0);
                }
            }
        }
        let a_new = if k == 0 {
            DVector::zeros(0)
        } else {
            let chol = Cholesky::new(moment_sums[i].clone())
                .ok_or(FaError::SingularMomentSum { variable: i })?;
            chol.solve(&cross)
        };
        let fitted = if k == 0 { 0.0 } else { a_new.dot(&cross) };
        let value = (sq - fitted) / counts[i] as f64;
        psi[i] = if value.is_nan() { eta } else { value.max(eta) };
        loadings.set_row(i, &a_new.transpose());
    }
    FactorParams::new(mu, loadings, psi)
}

/// Fits a `k`-factor model by ECM starting from `init`.
pub fn fit_ecm(
    data: &MaskedMatrix,
    k: usize,
    cfg: &FitConfig,
    init: &FactorParams,
) -> Result<FitResult> {
    let eta = cfg.eta_floor;
    run_iterations(data, k, cfg, init, |data, params, factors| {
        Ok((ecm_step_with(data, params, factors, eta)?, None))
    })
}

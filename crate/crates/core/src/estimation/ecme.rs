//! ECME: one exact conditional maximization of the observed likelihood for
//! the mean, an E-step producing the expected scatter matrix, then
//! conditional maximization of the expected complete-data likelihood for the
//! loadings and, sequentially, for each uniqueness.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{run_iterations, FitConfig, FitResult};
use crate::error::{FaError, Result};
use crate::linalg::{sym_eigen_desc, symmetrize, OuterSum};
use crate::missing::MaskedMatrix;
use crate::model::{check_data_dims, pattern_factors, FactorParams, PatternFactor};

/// Mean update `(sum_n W_n)^{-1} sum_n W_n x_n`, where `W_n` is the inverse of
/// the observed block of `Sigma` padded with zeros.
///
/// `W_n` does not depend on the mean, so this is the exact maximizer of the
/// observed log-likelihood over `mu` with `A` and `Psi` held fixed.
pub fn ecme_mu_step(data: &MaskedMatrix, params: &FactorParams) -> Result<DVector<f64>> {
    check_data_dims(params, data)?;
    let factors = pattern_factors(params, data)?;
    mu_step_with(data, params, &factors)
}

fn mu_step_with(
    data: &MaskedMatrix,
    params: &FactorParams,
    factors: &[PatternFactor],
) -> Result<DVector<f64>> {
    let d = data.ncols();
    let mu = params.mu();
    let values = data.values();
    let mut weight = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    // W_n = Psi_o^{-1} - G G'; the rank-k parts are summed as outer products.
    let mut low_rank = OuterSum::new(d, -1.0);
    let (mut sum, mut wr) = (vec![0.0; d], vec![0.0; d]);
    let mut proj = vec![0.0; params.dims().k];
    for (pattern, factor) in data.patterns().iter().zip(factors) {
        if pattern.is_empty() {
            continue;
        }
        let count = pattern.rows.len() as f64;
        // W is linear in the residual, so only the residual sum is needed.
        let d_o = pattern.observed.len();
        let sum = &mut sum[..d_o];
        sum.fill(0.0);
        for &row in &pattern.rows {
            for (a, &i) in pattern.observed.iter().enumerate() {
                sum[a] += values[(row, i)] - mu[i];
            }
        }
        let wr = &mut wr[..d_o];
        factor.solve_into(sum, &mut proj, wr);
        for (a, &i) in pattern.observed.iter().enumerate() {
            rhs[i] += wr[a];
            weight[(i, i)] += count * factor.psi_inv[a];
        }
        let scale = count.sqrt();
        for g in factor.whitened.as_slice().chunks_exact(d_o) {
            let mut col = low_rank.next_column(&mut weight);
            for (&v, &i) in g.iter().zip(&pattern.observed) {
                col[i] = scale * v;
            }
        }
    }
    low_rank.flush(&mut weight);
    symmetrize(&mut weight);
    // Solved about the current mean: mu + (sum W)^{-1} sum W (x - mu).
    let chol = Cholesky::new(weight).ok_or(FaError::SingularWeights)?;
    let shift = chol.solve(&rhs);
    if shift.iter().any(|v| !v.is_finite()) {
        return Err(FaError::SingularWeights);
    }
    Ok(mu + shift)
}

/// Expected scatter `S = (1/N) sum_n [(xhat_n - mu)(xhat_n - mu)' + T_n]`.
///
/// Missing coordinates are replaced by their conditional means given the
/// observed ones, and `T_n` holds the conditional covariance of the missing
/// block. Conditioning uses `params` for `A` and `Psi` and `mu` for the mean.
/// Every row enters the average, so a fully missing row contributes `Sigma`.
pub fn ecme_expected_cov(
    data: &MaskedMatrix,
    mu: &DVector<f64>,
    params: &FactorParams,
) -> Result<DMatrix<f64>> {
    check_data_dims(params, data)?;
    if mu.len() != data.ncols() {
        return Err(FaError::DimensionMismatch(format!(
            "mean has {} entries for {} variables",
            mu.len(),
            data.ncols()
        )));
    }
    let factors = pattern_factors(params, data)?;
    Ok(expected_cov_with(data, mu, params, &factors))
}

fn expected_cov_with(
    data: &MaskedMatrix,
    mu: &DVector<f64>,
    params: &FactorParams,
    factors: &[PatternFactor],
) -> DMatrix<f64> {
    let (n, d) = (data.nrows(), data.ncols());
    let k = params.dims().k;
    let a = params.loadings();
    let psi = params.uniquenesses();
    let mut centered = DMatrix::<f64>::zeros(n, d);
    let mut cond_cov = DMatrix::<f64>::zeros(d, d);
    let values = data.values();
    let mut r = vec![0.0; d];
    let (mut proj, mut ez) = (vec![0.0; k], vec![0.0; k]);

    // T^{mm} = Psi_m + B B' with row i of B equal to (L^{-1} a_i)'.
    let mut b = vec![0.0; d * k];

    for (pattern, factor) in data.patterns().iter().zip(factors) {
        let count = pattern.rows.len() as f64;
        for &i in &pattern.missing {
            cond_cov[(i, i)] += count * psi[i];
        }
        if k > 0 {
            for (row_b, &i) in b.chunks_exact_mut(k).zip(&pattern.missing) {
                for j in 0..k {
                    row_b[j] = (0..j + 1).map(|t| factor.post_root[(j, t)] * a[(i, t)]).sum();
                }
            }
            for (x, &i) in pattern.missing.iter().enumerate() {
                let b_i = &b[x * k..(x + 1) * k];
                for (y, &j) in pattern.missing.iter().enumerate().take(x + 1) {
                    let b_j = &b[y * k..(y + 1) * k];
                    let v = count * b_i.iter().zip(b_j).map(|(p, q)| p * q).sum::<f64>();
                    cond_cov[(i, j)] += v;
                    if x != y {
                        cond_cov[(j, i)] += v;
                    }
                }
            }
        }
        let fill = !pattern.missing.is_empty() && !pattern.observed.is_empty() && k > 0;
        let r = &mut r[..pattern.observed.len()];
        for &row in &pattern.rows {
            factor.residual_into(values, row, mu, r);
            for (&v, &i) in r.iter().zip(&pattern.observed) {
                centered[(row, i)] = v;
            }
            if fill {
                factor.posterior_mean_into(r, &mut proj, &mut ez);
                for &i in &pattern.missing {
                    centered[(row, i)] = (0..k).map(|j| a[(i, j)] * ez[j]).sum();
                }
            }
        }
    }
    let mut s = cond_cov;
    s.gemm(1.0, &centered.transpose(), &centered, 1.0);
    s /= n as f64;
    symmetrize(&mut s);
    s
}

/// `Psi^{-1/2} S Psi^{-1/2}`.
pub fn normalized_cov(s: &DMatrix<f64>, psi: &DVector<f64>) -> DMatrix<f64> {
    let inv_sqrt = psi.map(|p| 1.0 / p.sqrt());
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingUpdate {
    pub loadings: DMatrix<f64>,
    /// Number of leading normalized eigenvalues above one, capped at `k`;
    /// columns beyond it are zero.
    pub effective_k: usize,
}

/// Loading update `Psi^{1/2} U_k' (Lambda_k' - I)^{1/2}` from the leading
/// eigenpairs of the normalized scatter, with the rotation fixed to identity.
pub fn ecme_loading_step(s: &DMatrix<f64>, psi: &DVector<f64>, k: usize) -> LoadingUpdate {
    let d = psi.len();
    let (values, vectors) = sym_eigen_desc(&normalized_cov(s, psi));
    // Eigenvalues within rounding of one carry no signal.
    let cutoff = 1.0 + 64.0 * f64::EPSILON * values.get(0).map_or(1.0, |v| v.abs().max(1.0));
    let effective_k = values.iter().take(k).take_while(|&&l| l > cutoff).count();
    let mut loadings = DMatrix::zeros(d, k);
    for j in 0..effective_k {
        let scale = (values[j] - 1.0).sqrt();
        for i in 0..d {
            loadings[(i, j)] = psi[i].sqrt() * vectors[(i, j)] * scale;
        }
    }
    LoadingUpdate {
        loadings,
        effective_k,
    }
}

/// Sequential uniqueness update.
///
/// With `Abar = Psi^{-1/2} A` and `B_i = I + Abar Abar' + sum_{l<i} omega_l e_l e_l'`,
/// each `psi_i` becomes `max([(b_i' Sbar b_i - b_ii) / b_ii^2 + 1] psi_i, eta)`
/// where `b_i` is column `i` of `B_i^{-1}`, and `omega_i = psi_new_i / psi_i - 1`.
/// `B_i^{-1}` is carried forward by Sherman-Morrison rank-one updates.
pub fn ecme_psi_step(
    s_bar: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    psi: &DVector<f64>,
    eta: f64,
) -> DVector<f64> {
    let d = psi.len();
    let mut a_bar = loadings.clone();
    for (mut row, &p) in a_bar.row_iter_mut().zip(psi.iter()) {
        row /= p.sqrt();
    }
    let mut b = &a_bar * a_bar.transpose();
    for i in 0..d {
        b[(i, i)] += 1.0;
    }
    let mut b_inv = Cholesky::new(b)
        .expect("I + Abar Abar' is positive definite")
        .inverse();

    let mut out = psi.clone();
    for i in 0..d {
        let col = b_inv.column(i).clone_owned();
        let b_ii = col[i];
        let quad = col.dot(&(s_bar * &col));
        let proposal = ((quad - b_ii) / (b_ii * b_ii) + 1.0) * psi[i];
        let updated = if proposal.is_nan() { eta } else { proposal.max(eta) };
        out[i] = updated;
        let omega = updated / psi[i] - 1.0;
        if i + 1 < d && omega != 0.0 {
            let denom = 1.0 + omega * b_ii;
            b_inv.ger(-omega / denom, &col, &col, 1.0);
        }
    }
    out
}

/// One full ECME iteration.
pub fn ecme_step(
    data: &MaskedMatrix,
    params: &FactorParams,
    eta: f64,
) -> Result<(FactorParams, usize)> {
    check_data_dims(params, data)?;
    let factors = pattern_factors(params, data)?;
    ecme_step_with(data, params, &factors, eta)
}

fn ecme_step_with(
    data: &MaskedMatrix,
    params: &FactorParams,
    factors: &[PatternFactor],
    eta: f64,
) -> Result<(FactorParams, usize)> {
    let k = params.dims().k;
    let mu = mu_step_with(data, params, factors)?;
    let s = expected_cov_with(data, &mu, params, factors);
    let psi = params.uniquenesses();
    let update = ecme_loading_step(&s, psi, k);
    let s_bar = normalized_cov(&s, psi);
    let new_psi = ecme_psi_step(&s_bar, &update.loadings, psi, eta);
    let next = FactorParams::new(mu, update.loadings, new_psi)?;
    Ok((next, update.effective_k))
}

/// Fits a `k`-factor model by ECME starting from `init`.
pub fn fit_ecme(
    data: &MaskedMatrix,
    k: usize,
    cfg: &FitConfig,
    init: &FactorParams,
) -> Result<FitResult> {
    let eta = cfg.eta_floor;
    run_iterations(data, k, cfg, init, |data, params, factors| {
        let (next, rank) = ecme_step_with(data, params, factors, eta)?;
        Ok((next, Some(rank)))
    })
}

//! The factor-analysis parameterization and its likelihoods.
//!
//! A `k`-factor model for a `d`-vector is `x = A z + mu + e` with
//! `z ~ N(0, I_k)` and `e ~ N(0, Psi)`, `Psi` diagonal, so that
//! `x ~ N(mu, A A' + Psi)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{FaError, Result};
use crate::missing::MaskedMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Number of observed variables and number of factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub k: usize,
}

impl ModelDims {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if d == 0 {
            return Err(FaError::EmptyData);
        }
        let bound = k_max(d);
        if k > bound {
            return Err(FaError::TooManyFactors { k, k_max: bound, d });
        }
        Ok(Self { d, k })
    }
}

/// Largest admissible number of factors for `d` variables:
/// `floor(d + (1 - sqrt(1 + 8d)) / 2)`.
///
/// Evaluated exactly as the largest `k` with `(d - k)^2 >= d + k`, which is
/// the same bound without floating-point rounding.
pub fn k_max(d: usize) -> usize {
    let mut k = 0;
    while k < d && (d - (k + 1)).pow(2) >= d + k + 1 {
        k += 1;
    }
    k
}

/// Free parameters of a `k`-factor model: `d(k + 2) - k(k - 1)/2`.
pub fn dof(dims: ModelDims) -> usize {
    let ModelDims { d, k } = dims;
    d * (k + 2) - k * k.saturating_sub(1) / 2
}

/// Free parameters attached to variable `i` (one-based) when loadings are in
/// lower-triangular form: `i + 2` for `i <= k`, `k + 2` afterwards.
pub fn dof_per_variable(dims: ModelDims, i: usize) -> Result<usize> {
    if i == 0 || i > dims.d {
        return Err(FaError::IndexOutOfRange { index: i, d: dims.d });
    }
    Ok(if i <= dims.k { i + 2 } else { dims.k + 2 })
}

/// The parameter triple `(mu, A, Psi)`; `Psi` is stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct FactorParams {
    mu: DVector<f64>,
    loadings: DMatrix<f64>,
    uniquenesses: DVector<f64>,
}

impl FactorParams {
    pub fn new(
        mu: DVector<f64>,
        loadings: DMatrix<f64>,
        uniquenesses: DVector<f64>,
    ) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(FaError::EmptyData);
        }
        if loadings.nrows() != d || uniquenesses.len() != d {
            return Err(FaError::DimensionMismatch(format!(
                "mu has {d} entries, loadings {}x{}, uniquenesses {}",
                loadings.nrows(),
                loadings.ncols(),
                uniquenesses.len()
            )));
        }
        if loadings.ncols() > d {
            return Err(FaError::DimensionMismatch(format!(
                "{} factors for {d} variables",
                loadings.ncols()
            )));
        }
        if mu.iter().chain(loadings.iter()).any(|v| !v.is_finite()) {
            return Err(FaError::InvalidParams("non-finite mean or loading".into()));
        }
        if let Some(i) = uniquenesses.iter().position(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(FaError::InvalidParams(format!(
                "uniqueness {i} is {} (must be positive)",
                uniquenesses[i]
            )));
        }
        Ok(Self {
            mu,
            loadings,
            uniquenesses,
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn uniquenesses(&self) -> &DVector<f64> {
        &self.uniquenesses
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d: self.mu.len(),
            k: self.loadings.ncols(),
        }
    }

    /// Joint permutation of variables: new variable `j` is old `perm[j]`.
    pub fn permute_variables(&self, perm: &[usize]) -> Result<Self> {
        crate::missing::check_permutation(perm, self.dims().d)?;
        Self::new(
            DVector::from_iterator(perm.len(), perm.iter().map(|&p| self.mu[p])),
            self.loadings.select_rows(perm.iter()),
            DVector::from_iterator(perm.len(), perm.iter().map(|&p| self.uniquenesses[p])),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    mu: Vec<f64>,
    /// Row-major, one inner vector per variable.
    loadings: Vec<Vec<f64>>,
    uniquenesses: Vec<f64>,
}

impl From<FactorParams> for ParamsRepr {
    fn from(p: FactorParams) -> Self {
        Self {
            mu: p.mu.iter().copied().collect(),
            loadings: p
                .loadings
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            uniquenesses: p.uniquenesses.iter().copied().collect(),
        }
    }
}

impl TryFrom<ParamsRepr> for FactorParams {
    type Error = FaError;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        let d = r.mu.len();
        let k = r.loadings.first().map_or(0, Vec::len);
        if r.loadings.len() != d || r.loadings.iter().any(|row| row.len() != k) {
            return Err(FaError::DimensionMismatch("ragged loading matrix".into()));
        }
        let loadings = DMatrix::from_fn(d, k, |i, j| r.loadings[i][j]);
        Self::new(
            DVector::from_vec(r.mu),
            loadings,
            DVector::from_vec(r.uniquenesses),
        )
    }
}

/// Model-implied covariance `A A' + Psi`.
pub fn build_sigma(params: &FactorParams) -> DMatrix<f64> {
    let a = &params.loadings;
    let mut sigma = a * a.transpose();
    // Force exact symmetry; the product is symmetric up to summation order.
    let d = sigma.nrows();
    for i in 0..d {
        for j in 0..i {
            sigma[(j, i)] = sigma[(i, j)];
        }
        sigma[(i, i)] += params.uniquenesses[i];
    }
    sigma
}

/// Gaussian log-likelihood of fully observed rows under `N(mu, Sigma)`.
pub fn loglik_complete(params: &FactorParams, data: &DMatrix<f64>) -> Result<f64> {
    let d = params.dims().d;
    if data.ncols() != d {
        return Err(FaError::DimensionMismatch(format!(
            "data has {} columns, model has {d} variables",
            data.ncols()
        )));
    }
    if data.nrows() == 0 {
        return Err(FaError::EmptyData);
    }
    let chol = Cholesky::new(build_sigma(params)).ok_or_else(|| FaError::NotPositiveDefinite {
        context: "model covariance".into(),
    })?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let l = chol.l();
    let mut quad = 0.0;
    for row in data.row_iter() {
        let r = row.transpose() - &params.mu;
        let z = l.solve_lower_triangular(&r).ok_or_else(|| {
            FaError::NotPositiveDefinite {
                context: "triangular solve".into(),
            }
        })?;
        quad += z.norm_squared();
    }
    let n = data.nrows() as f64;
    Ok(-0.5 * (n * (d as f64 * LN_2PI + logdet) + quad))
}

/// Log-likelihood of the observed entries: each row contributes the marginal
/// normal density of its observed coordinates. Fully missing rows contribute 0.
pub fn loglik_observed(params: &FactorParams, data: &MaskedMatrix) -> Result<f64> {
    check_data_dims(params, data)?;
    let factors = pattern_factors(params, data)?;
    loglik_with(params, data, &factors)
}

/// Factorizations for every pattern of `data`, in pattern order.
pub(crate) fn pattern_factors(params: &FactorParams, data: &MaskedMatrix) -> Result<Vec<PatternFactor>> {
    let shared = SharedTerms::new(params);
    data.patterns()
        .iter()
        .map(|p| PatternFactor::with_shared(&shared, &p.observed))
        .collect()
}

/// [`loglik_observed`] from precomputed factorizations.
pub(crate) fn loglik_with(
    params: &FactorParams,
    data: &MaskedMatrix,
    factors: &[PatternFactor],
) -> Result<f64> {
    if data.n_empty_rows() == data.nrows() {
        return Err(FaError::EmptyData);
    }
    let mut total = 0.0;
    let mut r = vec![0.0; data.ncols()];
    for (pattern, factor) in data.patterns().iter().zip(factors) {
        if pattern.is_empty() {
            continue;
        }
        let r = &mut r[..pattern.observed.len()];
        for &row in &pattern.rows {
            factor.residual_into(data.values(), row, params.mu(), r);
            total += factor.row_loglik(r);
        }
    }
    Ok(total)
}

pub(crate) fn check_data_dims(params: &FactorParams, data: &MaskedMatrix) -> Result<()> {
    let d = params.dims().d;
    if data.ncols() != d {
        return Err(FaError::DimensionMismatch(format!(
            "data has {} columns, model has {d} variables",
            data.ncols()
        )));
    }
    Ok(())
}

/// Factorization of the observed block `Sigma_oo = A_o A_o' + Psi_o` for one
/// missingness pattern, through the `k x k` matrix `M = I + A_o' Psi_o^{-1} A_o`.
///
/// `M^{-1}` is the posterior covariance of the factors given the observed
/// coordinates, and `Sigma_oo^{-1} = Psi_o^{-1} - Psi_o^{-1} A_o M^{-1} A_o' Psi_o^{-1}`.
#[derive(Debug, Clone)]
pub(crate) struct PatternFactor {
    pub observed: Vec<usize>,
    pub psi_inv: DVector<f64>,
    /// `Psi_o^{-1} A_o`, `d_o x k`.
    pub scaled: DMatrix<f64>,
    /// `M^{-1}`, `k x k`.
    pub post_cov: DMatrix<f64>,
    /// `L^{-1}` with `M = L L'`, so `M^{-1} = L^{-T} L^{-1}`.
    pub post_root: DMatrix<f64>,
    /// `Psi_o^{-1} A_o L^{-T}`, so that
    /// `Sigma_oo^{-1} = Psi_o^{-1} - G G'`.
    pub whitened: DMatrix<f64>,
    /// `log |Sigma_oo|`.
    pub logdet: f64,
}

/// Per-variable terms reused by every pattern: `Psi^{-1} A` and the
/// `k x k` products `a_i a_i' / psi_i`, both stored row by row.
pub(crate) struct SharedTerms {
    k: usize,
    psi: Vec<f64>,
    scaled: Vec<f64>,
    outer: Vec<f64>,
}

impl SharedTerms {
    pub fn new(params: &FactorParams) -> Self {
        let ModelDims { d, k } = params.dims();
        let a = params.loadings();
        let psi: Vec<f64> = params.uniquenesses().iter().copied().collect();
        let mut scaled = vec![0.0; d * k];
        let mut outer = vec![0.0; d * k * k];
        for i in 0..d {
            for j in 0..k {
                scaled[i * k + j] = a[(i, j)] / psi[i];
            }
            let s_i = &scaled[i * k..(i + 1) * k];
            let o_i = &mut outer[i * k * k..(i + 1) * k * k];
            for s in 0..k {
                for t in 0..k {
                    o_i[s * k + t] = s_i[s] * a[(i, t)];
                }
            }
        }
        Self { k, psi, scaled, outer }
    }
}

impl PatternFactor {
    pub fn new(params: &FactorParams, observed: &[usize]) -> Result<Self> {
        Self::with_shared(&SharedTerms::new(params), observed)
    }

    pub fn with_shared(shared: &SharedTerms, observed: &[usize]) -> Result<Self> {
        let k = shared.k;
        let d_o = observed.len();
        let psi_inv = DVector::from_iterator(d_o, observed.iter().map(|&i| 1.0 / shared.psi[i]));
        let scaled = DMatrix::from_fn(d_o, k, |r, j| shared.scaled[observed[r] * k + j]);
        let logdet_psi: f64 = observed.iter().map(|&i| shared.psi[i].ln()).sum();
        let (post_cov, post_root, whitened, logdet_m) = if k == 0 {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DMatrix::zeros(d_o, 0), 0.0)
        } else {
            let mut m_flat = vec![0.0; k * k];
            for &i in observed {
                for (acc, v) in m_flat.iter_mut().zip(&shared.outer[i * k * k..(i + 1) * k * k]) {
                    *acc += v;
                }
            }
            for j in 0..k {
                m_flat[j * k + j] += 1.0;
            }
            let m = DMatrix::from_vec(k, k, m_flat);
            let chol: Cholesky<f64, Dyn> =
                Cholesky::new(m).ok_or_else(|| FaError::NotPositiveDefinite {
                    context: format!("observed block over {d_o} variables"),
                })?;
            let l = chol.l_dirty();
            let logdet_m = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            // L^{-1} by forward substitution; M^{-1} = L^{-T} L^{-1}.
            let mut l_inv = DMatrix::<f64>::zeros(k, k);
            for c in 0..k {
                for i in c..k {
                    let mut v = if i == c { 1.0 } else { 0.0 };
                    for t in c..i {
                        v -= l[(i, t)] * l_inv[(t, c)];
                    }
                    l_inv[(i, c)] = v / l[(i, i)];
                }
            }
            let mut post_cov = DMatrix::<f64>::zeros(k, k);
            for j in 0..k {
                for i in j..k {
                    let v: f64 = (i..k).map(|t| l_inv[(t, i)] * l_inv[(t, j)]).sum();
                    post_cov[(i, j)] = v;
                    post_cov[(j, i)] = v;
                }
            }
            // G = scaled L^{-T}.
            let mut g = DMatrix::<f64>::zeros(d_o, k);
            if d_o > 0 {
                let src = scaled.as_slice();
                for (j, g_j) in g.as_mut_slice().chunks_exact_mut(d_o).enumerate() {
                    for (t, s_t) in src.chunks_exact(d_o).enumerate().take(j + 1) {
                        let w = l_inv[(j, t)];
                        for (gv, &sv) in g_j.iter_mut().zip(s_t) {
                            *gv += sv * w;
                        }
                    }
                }
            }
            (post_cov, l_inv, g, logdet_m)
        };
        let logdet = logdet_psi + logdet_m;
        if !logdet.is_finite() {
            return Err(FaError::NotPositiveDefinite {
                context: "non-finite log-determinant".into(),
            });
        }
        Ok(Self {
            observed: observed.to_vec(),
            psi_inv,
            scaled,
            post_cov,
            post_root,
            whitened,
            logdet,
        })
    }

    /// Writes `x_o - mu_o` for `row` into `out`.
    pub fn residual_into(&self, values: &DMatrix<f64>, row: usize, mu: &DVector<f64>, out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(&self.observed) {
            *o = values[(row, i)] - mu[i];
        }
    }

    /// Writes the posterior mean of the factors for residual `r` into `out`.
    pub fn posterior_mean_into(&self, r: &[f64], proj: &mut [f64], out: &mut [f64]) {
        let k = self.scaled.ncols();
        for (p, col) in proj.iter_mut().zip(self.scaled.as_slice().chunks_exact(r.len().max(1))) {
            *p = dot(col, r);
        }
        for (o, row) in out.iter_mut().zip(self.post_cov.as_slice().chunks_exact(k.max(1))) {
            // post_cov is symmetric, so its columns double as rows.
            *o = dot(row, &proj[..k]);
        }
    }

    /// Log-density of one residual.
    pub fn row_loglik(&self, r: &[f64]) -> f64 {
        let mut quad: f64 = r.iter().zip(self.psi_inv.iter()).map(|(v, w)| v * v * w).sum();
        if !r.is_empty() {
            for g in self.whitened.as_slice().chunks_exact(r.len()) {
                let t = dot(g, r);
                quad -= t * t;
            }
        }
        -0.5 * (self.observed.len() as f64 * LN_2PI + self.logdet + quad)
    }

    /// Residuals of several rows, one per row of the result.
    pub fn residual_block(&self, data: &MaskedMatrix, rows: &[usize], mu: &DVector<f64>) -> DMatrix<f64> {
        let values = data.values();
        DMatrix::from_fn(rows.len(), self.observed.len(), |r, c| {
            let i = self.observed[c];
            values[(rows[r], i)] - mu[i]
        })
    }

    /// Posterior means for a block of residual rows, one per row of the result.
    pub fn posterior_mean_block(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        r * &self.scaled * &self.post_cov
    }

    /// Posterior mean of the factors, `M^{-1} A_o' Psi_o^{-1} r`.
    pub fn posterior_mean(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.post_cov * (self.scaled.tr_mul(r))
    }

    /// Writes `Sigma_oo^{-1} r` into `out`, using `Psi_o^{-1} - G G'`.
    pub fn solve_into(&self, r: &[f64], proj: &mut [f64], out: &mut [f64]) {
        let d_o = r.len();
        for ((o, &v), &w) in out.iter_mut().zip(r).zip(self.psi_inv.iter()) {
            *o = w * v;
        }
        if d_o == 0 {
            return;
        }
        for (p, g) in proj.iter_mut().zip(self.whitened.as_slice().chunks_exact(d_o)) {
            *p = dot(g, r);
        }
        for (&p, g) in proj.iter().zip(self.whitened.as_slice().chunks_exact(d_o)) {
            for (o, &gv) in out.iter_mut().zip(g) {
                *o -= p * gv;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Maximum-likelihood estimation of factor models from incomplete data.
//!
//! Two monotone algorithms are provided. [`fit_ecme`] treats the missing
//! entries of `x` as missing data and takes an exact conditional maximization
//! step of the observed likelihood for the mean. [`fit_ecm`] treats only the
//! latent factors as missing data and updates each variable's parameters from
//! its own observed rows. Both stop on the relative change of the observed
//! log-likelihood, `|L_t - L_{t-1}| / (1 + |L_t|) < tol`.

mod ecm;
mod ecme;
mod init;

use serde::{Deserialize, Serialize};

use crate::error::{FaError, Result};
use crate::missing::MaskedMatrix;
use crate::model::{check_data_dims, loglik_with, pattern_factors, FactorParams, ModelDims, PatternFactor};

pub use ecm::{ecm_posterior_moments, ecm_step, fit_ecm, PosteriorMoments};
pub use ecme::{
    ecme_expected_cov, ecme_loading_step, ecme_mu_step, ecme_psi_step, ecme_step, fit_ecme,
    normalized_cov, LoadingUpdate,
};
pub use init::init_pca;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Ecme,
    Ecm,
}

impl std::str::FromStr for Algorithm {
    type Err = FaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ecme" => Ok(Self::Ecme),
            "ecm" => Ok(Self::Ecm),
            other => Err(FaError::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Stopping rule and uniqueness floor shared by both algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub eta_floor: f64,
    pub algorithm: Algorithm,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            eta_floor: 0.005,
            algorithm: Algorithm::Ecme,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(FaError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FaError::Config("max_iter must be at least 1".into()));
        }
        if !(self.eta_floor > 0.0) {
            return Err(FaError::Config(format!(
                "eta_floor must be positive, got {}",
                self.eta_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// Rows without any observed entry were excluded from estimation.
    EmptyRowsSkipped { rows: usize },
    /// The iteration cap was reached before the tolerance was met.
    MaxIterReached { max_iter: usize },
    /// The log-likelihood dropped by more than the numerical slack.
    AscentViolation { iteration: usize, drop: f64 },
    /// Fewer than `k` eigenvalues of the normalized covariance exceed one in
    /// the final loading update; trailing loading columns are zero.
    ReducedRank { effective_k: usize, k: usize },
}

/// Outcome of one estimation run at a fixed number of factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FactorParams,
    pub loglik: f64,
    /// Observed log-likelihood at the starting point followed by one entry per
    /// iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<FitWarning>,
}

/// Runs the configured algorithm from a PCA start.
pub fn fit(data: &MaskedMatrix, k: usize, cfg: &FitConfig) -> Result<FitResult> {
    let init = init_pca(data, k, cfg.eta_floor)?;
    match cfg.algorithm {
        Algorithm::Ecme => fit_ecme(data, k, cfg, &init),
        Algorithm::Ecm => fit_ecm(data, k, cfg, &init),
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / (1.0 + cur.abs())
}

/// Common driver: validation, empty-row removal, the iteration loop and the
/// stopping rule. `step` maps current parameters to the next iterate and
/// reports the effective loading rank where meaningful.
pub(crate) fn run_iterations<F>(
    data: &MaskedMatrix,
    k: usize,
    cfg: &FitConfig,
    init: &FactorParams,
    mut step: F,
) -> Result<FitResult>
where
    F: FnMut(&MaskedMatrix, &FactorParams, &[PatternFactor]) -> Result<(FactorParams, Option<usize>)>,
{
    cfg.validate()?;
    check_data_dims(init, data)?;
    ModelDims::new(data.ncols(), k)?;
    if init.dims().k != k {
        return Err(FaError::DimensionMismatch(format!(
            "initial loadings have {} columns, expected {k}",
            init.dims().k
        )));
    }
    data.require_all_observed()?;

    let mut warnings = Vec::new();
    let empty = data.n_empty_rows();
    let owned;
    let data = if empty > 0 {
        warnings.push(FitWarning::EmptyRowsSkipped { rows: empty });
        owned = data.without_empty_rows()?;
        &owned
    } else {
        data
    };

    let floored = init.uniquenesses().map(|p| p.max(cfg.eta_floor));
    let mut params = FactorParams::new(init.mu().clone(), init.loadings().clone(), floored)?;
    let mut factors = pattern_factors(&params, data).map_err(|e| wrap(0, e))?;
    let mut loglik = loglik_with(&params, data, &factors).map_err(|e| wrap(0, e))?;
    let mut trace = vec![loglik];
    let mut converged = false;
    let mut last_rank = None;

    for iteration in 1..=cfg.max_iter {
        let (next, rank) = step(data, &params, &factors).map_err(|e| wrap(iteration, e))?;
        let next_factors = pattern_factors(&next, data).map_err(|e| wrap(iteration, e))?;
        let next_loglik = loglik_with(&next, data, &next_factors).map_err(|e| wrap(iteration, e))?;
        let slack = 1e-8 * (1.0 + loglik.abs());
        if next_loglik < loglik - slack {
            warnings.push(FitWarning::AscentViolation {
                iteration,
                drop: loglik - next_loglik,
            });
        }
        let change = relative_change(loglik, next_loglik);
        params = next;
        factors = next_factors;
        loglik = next_loglik;
        last_rank = rank;
        trace.push(loglik);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(FitWarning::MaxIterReached {
            max_iter: cfg.max_iter,
        });
    }
    if let Some(effective_k) = last_rank.filter(|&r| r < k) {
        warnings.push(FitWarning::ReducedRank { effective_k, k });
    }
    Ok(FitResult {
        params,
        loglik,
        iterations: trace.len() - 1,
        trace,
        converged,
        warnings,
    })
}

fn wrap(iteration: usize, err: FaError) -> FaError {
    match err {
        e @ FaError::Iteration { .. } => e,
        e => FaError::Iteration {
            iteration,
            source: Box::new(e),
        },
    }
}

//! Maximum-likelihood factor analysis on incomplete data, and selection of the
//! number of factors with AIC, BIC, CAIC and the hierarchical BIC (HBIC).
//!
//! The crate is organized around the two-stage procedure: fit a `k`-factor
//! model for every candidate `k`, then choose the `k` that maximizes a
//! penalized observed-data log-likelihood.
//!
//! * [`model`]: parameters, free-parameter counts, complete and observed
//!   log-likelihoods.
//! * [`missing`]: masked data, per-variable counts `N_i`, MCAR deletion, mean
//!   imputation.
//! * [`estimation`]: ECME and ECM fitting with a PCA start.
//! * [`criteria`]: penalties and [`select_k`].
//! * [`simulation`]: the synthetic designs and replicated studies.
//! * [`io`]: CSV input and output.
//!
//! ```
//! use incomplete_fa::{build_design, draw_dataset, apply_mcar_mask, select_k};
//! use incomplete_fa::{CriterionKind, DesignName, FitConfig, KRange};
//!
//! let (design, rates) = build_design(DesignName::LowDim, 1.0).unwrap();
//! let complete = draw_dataset(&design, 1);
//! let data = apply_mcar_mask(&complete, &rates, 2).unwrap();
//! let report = select_k(&data, KRange::new(2, 4).unwrap(), &FitConfig::default(), &CriterionKind::ALL).unwrap();
//! assert!(report.chosen_k[&CriterionKind::Hbic] >= 2);
//! ```

pub mod cli;
pub mod criteria;
pub mod error;
pub mod estimation;
pub mod io;
mod linalg;
pub mod missing;
pub mod model;
pub mod simulation;

pub use criteria::{criterion_score, penalty, select_k, CriterionKind, KRange, SelectionReport};
pub use error::{FaError, Result};
pub use estimation::{
    ecm_posterior_moments, ecme_expected_cov, ecme_loading_step, ecme_mu_step, ecme_psi_step,
    fit, fit_ecm, fit_ecme, init_pca, Algorithm, FitConfig, FitResult, FitWarning,
};
pub use missing::{apply_mcar_mask, mean_impute, sorted_counts, MaskedMatrix, MissingRates};
pub use model::{
    build_sigma, dof, dof_per_variable, k_max, loglik_complete, loglik_observed, FactorParams,
    ModelDims,
};
pub use simulation::{
    build_design, draw_dataset, run_study, scree_eigenvalues, DesignName, StudyConfig,
    StudyReport, SyntheticDesign,
};

//! Penalized-likelihood criteria and the two-stage choice of `k`.
//!
//! Every criterion scores a fitted `k`-factor model as `L_o - P(k)`, and the
//! selected `k` maximizes the score. The penalties are
//!
//! | criterion | penalty |
//! |-----------|---------|
//! | AIC  | `D(k)` |
//! | BIC  | `D(k)/2 * ln N` |
//! | CAIC | `D(k)/2 * (ln N + 1)` |
//! | HBIC | `sum_i D_i(k)/2 * ln N_(i)`, counts sorted ascending |
//!
//! HBIC charges each variable's parameters against the number of rows in
//! which that variable is actually observed; on complete data it equals BIC.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FaError, Result};
use crate::estimation::{fit, FitConfig, FitResult};
use crate::missing::{sort_counts, MaskedMatrix};
use crate::model::{dof, dof_per_variable, k_max, ModelDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CriterionKind {
    Aic,
    Bic,
    Caic,
    Hbic,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 4] = [Self::Aic, Self::Bic, Self::Caic, Self::Hbic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Aic => "AIC",
            Self::Bic => "BIC",
            Self::Caic => "CAIC",
            Self::Hbic => "HBIC",
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = FaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AIC" => Ok(Self::Aic),
            "BIC" => Ok(Self::Bic),
            "CAIC" => Ok(Self::Caic),
            "HBIC" => Ok(Self::Hbic),
            other => Err(FaError::Config(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Penalty subtracted from the observed log-likelihood.
///
/// `n` is the total number of rows and `n_obs_per_var` the per-variable
/// observed counts; only HBIC reads the latter.
pub fn penalty(kind: CriterionKind, dims: ModelDims, n: usize, n_obs_per_var: &[usize]) -> Result<f64> {
    if n == 0 {
        return Err(FaError::EmptyData);
    }
    let total = dof(dims) as f64;
    let ln_n = (n as f64).ln();
    Ok(match kind {
        CriterionKind::Aic => total,
        CriterionKind::Bic => 0.5 * total * ln_n,
        CriterionKind::Caic => 0.5 * total * (ln_n + 1.0),
        CriterionKind::Hbic => hbic_penalty(dims, n_obs_per_var)?,
    })
}

fn hbic_penalty(dims: ModelDims, counts: &[usize]) -> Result<f64> {
    if counts.len() != dims.d {
        return Err(FaError::DimensionMismatch(format!(
            "{} counts for {} variables",
            counts.len(),
            dims.d
        )));
    }
    if let Some(variable) = counts.iter().position(|&c| c == 0) {
        return Err(FaError::UnobservedVariable { variable });
    }
    let (_, sorted) = sort_counts(counts);
    let mut acc = 0.0;
    for (j, &count) in sorted.iter().enumerate() {
        let di = dof_per_variable(dims, j + 1)? as f64;
        acc += 0.5 * di * (count as f64).ln();
    }
    Ok(acc)
}

/// `fit.loglik - penalty(kind, ...)` with counts taken from `data`.
pub fn criterion_score(kind: CriterionKind, fit: &FitResult, data: &MaskedMatrix) -> Result<f64> {
    let p = penalty(kind, fit.params.dims(), data.nrows(), data.n_obs_per_var())?;
    Ok(fit.loglik - p)
}

/// Inclusive range of factor counts to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
}

impl KRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min > max {
            return Err(FaError::Config(format!("empty k range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// `[1, k_max(d)]`, capped at `ceiling`; `[0, 0]` when `k_max(d) = 0`.
    pub fn default_for(d: usize, ceiling: Option<usize>) -> Self {
        let upper = ceiling.map_or(k_max(d), |c| c.min(k_max(d)));
        Self {
            min: upper.min(1),
            max: upper,
        }
    }

    pub fn validate_for(&self, d: usize) -> Result<()> {
        if self.min > self.max {
            return Err(FaError::Config(format!("empty k range [{}, {}]", self.min, self.max)));
        }
        let bound = k_max(d);
        if self.max > bound {
            return Err(FaError::TooManyFactors {
                k: self.max,
                k_max: bound,
                d,
            });
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.min..=self.max
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.min..=self.max).contains(&k)
    }
}

/// Per-`k` outcome inside a [`SelectionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEntry {
    pub k: usize,
    pub dof: usize,
    /// `None` when the fit failed.
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub penalties: BTreeMap<CriterionKind, f64>,
    pub scores: BTreeMap<CriterionKind, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub k_range: KRange,
    pub n: usize,
    pub n_obs_per_var: Vec<usize>,
    pub kinds: Vec<CriterionKind>,
    pub entries: Vec<KEntry>,
    pub chosen_k: BTreeMap<CriterionKind, usize>,
    /// Set when the fitted log-likelihoods decrease somewhere along `k`,
    /// which signals a local optimum in at least one fit.
    pub nonmonotone_loglik: bool,
    #[serde(skip)]
    pub fits: Vec<Option<FitResult>>,
}

impl SelectionReport {
    pub fn entry(&self, k: usize) -> Option<&KEntry> {
        self.entries.iter().find(|e| e.k == k)
    }

    pub fn fit_for(&self, k: usize) -> Option<&FitResult> {
        self.entries
            .iter()
            .position(|e| e.k == k)
            .and_then(|i| self.fits[i].as_ref())
    }

    /// Criterion-versus-`k` table: `k, loglik, <one score column per criterion>`.
    /// Failed fits leave empty cells.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("k,loglik");
        for kind in &self.kinds {
            out.push(',');
            out.push_str(kind.name());
        }
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.k.to_string());
            out.push(',');
            if let Some(l) = e.loglik {
                out.push_str(&l.to_string());
            }
            for kind in &self.kinds {
                out.push(',');
                if let Some(s) = e.scores.get(kind) {
                    out.push_str(&s.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Fits every `k` in `k_range` once and picks, per criterion, the smallest
/// `k` attaining the maximal score.
///
/// Failed fits are recorded in the report and skipped; the call errors only
/// if no `k` could be fitted.
pub fn select_k(
    data: &MaskedMatrix,
    k_range: KRange,
    cfg: &FitConfig,
    kinds: &[CriterionKind],
) -> Result<SelectionReport> {
    cfg.validate()?;
    k_range.validate_for(data.ncols())?;
    data.require_all_observed()?;
    let mut kinds: Vec<CriterionKind> = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    if kinds.is_empty() {
        return Err(FaError::Config("no criterion requested".into()));
    }

    let ks: Vec<usize> = k_range.iter().collect();
    let fits: Vec<Result<FitResult>> = ks.par_iter().map(|&k| fit(data, k, cfg)).collect();

    let mut entries = Vec::with_capacity(ks.len());
    let mut kept = Vec::with_capacity(ks.len());
    for (&k, outcome) in ks.iter().zip(fits) {
        let dims = ModelDims::new(data.ncols(), k)?;
        let mut penalties = BTreeMap::new();
        for &kind in &kinds {
            penalties.insert(kind, penalty(kind, dims, data.nrows(), data.n_obs_per_var())?);
        }
        match outcome {
            Ok(f) => {
                let scores = penalties.iter().map(|(&kind, &p)| (kind, f.loglik - p)).collect();
                entries.push(KEntry {
                    k,
                    dof: dof(dims),
                    loglik: Some(f.loglik),
                    converged: f.converged,
                    iterations: f.iterations,
                    penalties,
                    scores,
                    error: None,
                });
                kept.push(Some(f));
            }
            Err(e) => {
                entries.push(KEntry {
                    k,
                    dof: dof(dims),
                    loglik: None,
                    converged: false,
                    iterations: 0,
                    penalties,
                    scores: BTreeMap::new(),
                    error: Some(e.to_string()),
                });
                kept.push(None);
            }
        }
    }

    let mut chosen_k = BTreeMap::new();
    for &kind in &kinds {
        let scores: Vec<f64> = entries
            .iter()
            .map(|e| e.scores.get(&kind).copied().unwrap_or(f64::NAN))
            .collect();
        match argmax_smallest(&scores) {
            Some(i) => {
                chosen_k.insert(kind, entries[i].k);
            }
            None => return Err(FaError::NoSuccessfulFit),
        }
    }

    let logliks: Vec<f64> = entries.iter().filter_map(|e| e.loglik).collect();
    let nonmonotone_loglik = logliks.windows(2).any(|w| w[1] < w[0]);

    Ok(SelectionReport {
        k_range,
        n: data.nrows(),
        n_obs_per_var: data.n_obs_per_var().to_vec(),
        kinds,
        entries,
        chosen_k,
        nonmonotone_loglik,
        fits: kept,
    })
}

/// Smallest index attaining the maximum of `scores`; NaN entries are ignored.
pub fn argmax_smallest(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

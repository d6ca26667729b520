//! Observedness structure of a data matrix: masks, per-variable counts,
//! row patterns, MCAR deletion and mean imputation.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FaError, Result};

/// A group of rows sharing the same set of observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RowPattern {
    /// Observed variable indices, ascending.
    pub observed: Vec<usize>,
    /// Missing variable indices, ascending.
    pub missing: Vec<usize>,
    /// Row indices carrying this pattern, ascending.
    pub rows: Vec<usize>,
}

impl RowPattern {
    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

/// An `N x d` data matrix paired with its observedness mask.
///
/// Missing cells hold NaN and are never read by any routine of this crate;
/// every consumer goes through the mask or the row patterns.
#[derive(Debug, Clone)]
pub struct MaskedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    n_obs_per_var: Vec<usize>,
    patterns: Vec<RowPattern>,
}

impl MaskedMatrix {
    /// Builds a masked matrix from explicit values and mask (`true` = observed).
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        let (n, d) = values.shape();
        if n == 0 || d == 0 {
            return Err(FaError::EmptyData);
        }
        if mask.shape() != (n, d) {
            return Err(FaError::DimensionMismatch(format!(
                "values are {n}x{d} but mask is {}x{}",
                mask.nrows(),
                mask.ncols()
            )));
        }
        for r in 0..n {
            for c in 0..d {
                if mask[(r, c)] && !values[(r, c)].is_finite() {
                    return Err(FaError::InvalidParams(format!(
                        "observed cell ({r}, {c}) is not finite"
                    )));
                }
            }
        }
        let mut values = values;
        for r in 0..n {
            for c in 0..d {
                if !mask[(r, c)] {
                    values[(r, c)] = f64::NAN;
                }
            }
        }
        let n_obs_per_var = (0..d)
            .map(|c| mask.column(c).iter().filter(|&&m| m).count())
            .collect();
        let patterns = group_patterns(&mask);
        Ok(Self {
            values,
            mask,
            n_obs_per_var,
            patterns,
        })
    }

    /// Derives the mask from a cell predicate (`true` = missing).
    pub fn from_dense<F>(values: DMatrix<f64>, is_missing: F) -> Result<Self>
    where
        F: Fn(f64) -> bool,
    {
        let mask = values.map(|v| !is_missing(v));
        Self::new(values, mask)
    }

    /// Wraps a fully observed matrix.
    pub fn complete(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Raw values; missing cells are NaN.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.mask[(row, col)].then(|| self.values[(row, col)])
    }

    /// `N_i`, the number of rows in which variable `i` is observed.
    pub fn n_obs_per_var(&self) -> &[usize] {
        &self.n_obs_per_var
    }

    pub fn patterns(&self) -> &[RowPattern] {
        &self.patterns
    }

    pub fn total_observed(&self) -> usize {
        self.n_obs_per_var.iter().sum()
    }

    pub fn is_complete(&self) -> bool {
        self.n_obs_per_var.iter().all(|&c| c == self.nrows())
    }

    /// Number of rows without a single observed entry.
    pub fn n_empty_rows(&self) -> usize {
        self.patterns
            .iter()
            .filter(|p| p.is_empty())
            .map(|p| p.rows.len())
            .sum()
    }

    /// Copy with all fully missing rows dropped.
    pub fn without_empty_rows(&self) -> Result<Self> {
        if self.n_empty_rows() == 0 {
            return Ok(self.clone());
        }
        let keep: Vec<usize> = (0..self.nrows())
            .filter(|&r| self.mask.row(r).iter().any(|&m| m))
            .collect();
        if keep.is_empty() {
            return Err(FaError::EmptyData);
        }
        let values = self.values.select_rows(keep.iter());
        let mask = self.mask.select_rows(keep.iter());
        Self::new(values, mask)
    }

    /// Reorders columns so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.ncols())?;
        let values = self.values.select_columns(perm.iter());
        let mask = self.mask.select_columns(perm.iter());
        Self::new(values, mask)
    }

    /// Observed entries of column `col` in row order.
    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.nrows())
            .filter_map(|r| self.get(r, col))
            .collect()
    }

    pub(crate) fn first_unobserved_variable(&self) -> Option<usize> {
        self.n_obs_per_var.iter().position(|&c| c == 0)
    }

    pub(crate) fn require_all_observed(&self) -> Result<()> {
        match self.first_unobserved_variable() {
            Some(variable) => Err(FaError::UnobservedVariable { variable }),
            None => Ok(()),
        }
    }
}

/// Equal when masks agree and every observed value is bitwise equal.
impl PartialEq for MaskedMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &m)| !m || a.to_bits() == b.to_bits())
    }
}

fn group_patterns(mask: &DMatrix<bool>) -> Vec<RowPattern> {
    let (n, d) = mask.shape();
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut patterns: Vec<RowPattern> = Vec::new();
    for r in 0..n {
        let key: Vec<bool> = (0..d).map(|c| mask[(r, c)]).collect();
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            patterns.push(RowPattern {
                observed: (0..d).filter(|&c| key[c]).collect(),
                missing: (0..d).filter(|&c| !key[c]).collect(),
                rows: Vec::new(),
            });
            patterns.len() - 1
        });
        patterns[slot].rows.push(r);
    }
    patterns
}

pub(crate) fn check_permutation(perm: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if perm.len() != d {
        return Err(FaError::DimensionMismatch(format!(
            "permutation of length {} for {d} columns",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= d || seen[p] {
            return Err(FaError::DimensionMismatch(format!(
                "not a permutation of 0..{d}"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Per-variable missing probabilities `gamma_i`, each in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingRates(Vec<f64>);

impl MissingRates {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        for (variable, &rate) in gamma.iter().enumerate() {
            if !(0.0..1.0).contains(&rate) {
                return Err(FaError::InvalidRate { variable, rate });
            }
        }
        Ok(Self(gamma))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Deletes each cell `(n, i)` independently with probability `gamma_i`.
///
/// Cells are visited row by row, one uniform draw per cell, so the mask is a
/// pure function of the seed and the shape.
pub fn apply_mcar_mask(
    complete: &DMatrix<f64>,
    rates: &MissingRates,
    seed: u64,
) -> Result<MaskedMatrix> {
    let (n, d) = complete.shape();
    if rates.len() != d {
        return Err(FaError::DimensionMismatch(format!(
            "{} missing rates for {d} variables",
            rates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = DMatrix::from_element(n, d, true);
    for r in 0..n {
        for (c, &gamma) in rates.as_slice().iter().enumerate() {
            let u: f64 = rng.random();
            if u < gamma {
                mask[(r, c)] = false;
            }
        }
    }
    MaskedMatrix::new(complete.clone(), mask)
}

/// Per-variable means over observed entries.
pub fn observed_means(data: &MaskedMatrix) -> Result<Vec<f64>> {
    data.require_all_observed()?;
    Ok((0..data.ncols())
        .map(|c| {
            let col = data.observed_column(c);
            col.iter().sum::<f64>() / col.len() as f64
        })
        .collect())
}

/// Replaces every missing cell by the observed mean of its column.
pub fn mean_impute(data: &MaskedMatrix) -> Result<DMatrix<f64>> {
    let means = observed_means(data)?;
    let mut out = data.values().clone();
    for r in 0..data.nrows() {
        for (c, &m) in means.iter().enumerate() {
            if !data.is_observed(r, c) {
                out[(r, c)] = m;
            }
        }
    }
    Ok(out)
}

/// Stable ascending sort of the per-variable counts.
///
/// Returns `(order, sorted)` where `sorted[j] = n_obs_per_var[order[j]]`.
/// Indices are zero-based.
pub fn sorted_counts(data: &MaskedMatrix) -> (Vec<usize>, Vec<usize>) {
    sort_counts(data.n_obs_per_var())
}

pub(crate) fn sort_counts(counts: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| counts[i]);
    let sorted = order.iter().map(|&i| counts[i]).collect();
    (order, sorted)
}

//! Synthetic designs and the replicated model-selection study.
//!
//! Each replication draws a fresh complete dataset from the design's factor
//! model, deletes cells under the design's MCAR rates, runs the two-stage
//! selection for all four criteria and classifies each chosen `k` against the
//! generating `k` as an underestimate, a success or an overestimate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{select_k, CriterionKind, KRange};
use crate::error::{FaError, Result};
use crate::estimation::FitConfig;
use crate::linalg::sym_eigen_desc;
use crate::missing::{apply_mcar_mask, mean_impute, MaskedMatrix, MissingRates};
use crate::model::FactorParams;

/// Transposed `10 x 3` loading matrix of the base design, one row per factor.
const BASE_LOADINGS_T: [[f64; 10]; 3] = [
    [0.8, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.1, 0.7, -0.7, 0.8, 0.0, 0.2, -0.1, 0.1, -0.1],
    [0.0, 0.0, -0.1, 0.1, 0.1, 0.9, 0.95, -0.95, -0.8, -0.95],
];

/// `(slope, intercept)` pairs of the base rate vector: `gamma_i = slope * m + intercept`.
const BASE_RATES: [(f64, f64); 10] = [
    (0.6, 0.0),
    (0.6, 0.0),
    (0.7, 0.0),
    (0.7, 0.0),
    (0.7, 0.0),
    (0.0, 0.1),
    (0.0, 0.1),
    (0.0, 0.1),
    (0.0, 0.1),
    (0.0, 0.1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignName {
    LowDim,
    HighDim,
    Custom,
}

impl DesignName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LowDim => "low",
            Self::HighDim => "high",
            Self::Custom => "custom",
        }
    }
}

impl std::str::FromStr for DesignName {
    type Err = FaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "lowdim" | "low_dim" => Ok(Self::LowDim),
            "high" | "highdim" | "high_dim" => Ok(Self::HighDim),
            other => Err(FaError::Config(format!(
                "unknown design '{other}' (expected 'low' or 'high')"
            ))),
        }
    }
}

/// A generating factor model, a sample size and a missing-rate template
/// `gamma_i(m) = slope_i * m + intercept_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub name: DesignName,
    pub n: usize,
    pub params: FactorParams,
    pub rate_template: Vec<(f64, f64)>,
}

impl SyntheticDesign {
    pub fn custom(params: FactorParams, n: usize, rate_template: Vec<(f64, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(FaError::EmptyData);
        }
        if rate_template.len() != params.dims().d {
            return Err(FaError::DimensionMismatch(format!(
                "{} rate entries for {} variables",
                rate_template.len(),
                params.dims().d
            )));
        }
        Ok(Self {
            name: DesignName::Custom,
            n,
            params,
            rate_template,
        })
    }

    pub fn true_k(&self) -> usize {
        self.params.dims().k
    }

    pub fn rates(&self, m: f64) -> Result<MissingRates> {
        if !(m >= 0.0) {
            return Err(FaError::Config(format!("rate multiplier must be nonnegative, got {m}")));
        }
        MissingRates::new(self.rate_template.iter().map(|&(s, c)| s * m + c).collect())
    }
}

/// `d` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, d: usize) -> Vec<f64> {
    match d {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..d).map(|i| a + (b - a) * i as f64 / (d - 1) as f64).collect(),
    }
}

fn base_loadings() -> DMatrix<f64> {
    DMatrix::from_fn(10, 3, |i, j| BASE_LOADINGS_T[j][i])
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Instantiates a named design and its rate vector at multiplier `m`.
///
/// * `LowDim`: `d = 10`, `N = 250`, `k = 3`, `Psi = 0.1 diag(linspace(0.9, 1, 10))`.
/// * `HighDim`: `d = 40`, `N = 400`, `k = 6`, `A = blkdiag([A; A], [A; A])`,
///   `Psi = 0.2 diag(linspace(0.9, 1, 40))`, rates repeated four times.
pub fn build_design(name: DesignName, m: f64) -> Result<(SyntheticDesign, MissingRates)> {
    let design = match name {
        DesignName::LowDim => {
            let psi = linspace(0.9, 1.0, 10).into_iter().map(|v| 0.1 * v);
            SyntheticDesign {
                name,
                n: 250,
                params: FactorParams::new(
                    DVector::zeros(10),
                    base_loadings(),
                    DVector::from_iterator(10, psi),
                )?,
                rate_template: BASE_RATES.to_vec(),
            }
        }
        DesignName::HighDim => {
            let a = base_loadings();
            let stacked = DMatrix::from_fn(20, 3, |i, j| a[(i % 10, j)]);
            let psi = linspace(0.9, 1.0, 40).into_iter().map(|v| 0.2 * v);
            SyntheticDesign {
                name,
                n: 400,
                params: FactorParams::new(
                    DVector::zeros(40),
                    block_diag(&stacked, &stacked),
                    DVector::from_iterator(40, psi),
                )?,
                rate_template: BASE_RATES.iter().copied().cycle().take(40).collect(),
            }
        }
        DesignName::Custom => {
            return Err(FaError::Config(
                "custom designs are built with SyntheticDesign::custom".into(),
            ))
        }
    };
    let rates = design.rates(m)?;
    Ok((design, rates))
}

/// Draws `N` rows `x = A z + mu + e`, `z ~ N(0, I)`, `e ~ N(0, Psi)`.
pub fn draw_dataset(design: &SyntheticDesign, seed: u64) -> DMatrix<f64> {
    draw_rows(&design.params, design.n, seed)
}

/// Draws `n` rows from the factor model `params`.
pub fn draw_rows(params: &FactorParams, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.dims().d;
    let k = params.dims().k;
    let a = params.loadings();
    let sd = params.uniquenesses().map(f64::sqrt);
    let mut out = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(k);
    for r in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let common = a * &z;
        for i in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            out[(r, i)] = common[i] + params.mu()[i] + sd[i] * e;
        }
    }
    out
}

/// Eigenvalues of the correlation matrix of the mean-imputed data, descending.
pub fn scree_eigenvalues(data: &MaskedMatrix) -> Result<Vec<f64>> {
    let x = mean_impute(data)?;
    let (n, d) = x.shape();
    let means = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &means;
    }
    let cov = c.tr_mul(&c) / n as f64;
    for i in 0..d {
        if !(cov[(i, i)] > 0.0) {
            return Err(FaError::ZeroVariance { column: i });
        }
    }
    let corr = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()
        }
    });
    let (values, _) = sym_eigen_desc(&corr);
    Ok(values.iter().copied().collect())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of replication `rep` in rate-grid cell `m_index` of a study.
pub fn derive_seed(base_seed: u64, design: &str, m_index: usize, rep: usize) -> u64 {
    [fnv1a(design), m_index as u64, rep as u64]
        .into_iter()
        .fold(splitmix(base_seed), |h, x| splitmix(h ^ x))
}

/// Underestimate / success / overestimate counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usc {
    pub u: usize,
    pub s: usize,
    pub o: usize,
}

impl Usc {
    pub fn total(&self) -> usize {
        self.u + self.s + self.o
    }

    fn record(&mut self, chosen: usize, truth: usize) {
        match chosen.cmp(&truth) {
            std::cmp::Ordering::Less => self.u += 1,
            std::cmp::Ordering::Equal => self.s += 1,
            std::cmp::Ordering::Greater => self.o += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub chosen_k: Option<BTreeMap<CriterionKind, usize>>,
    pub error: Option<String>,
}

/// All replications at one rate multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub m: f64,
    pub rates: Vec<f64>,
    pub counts: BTreeMap<CriterionKind, Usc>,
    pub failures: usize,
    pub replications: Vec<ReplicationOutcome>,
}

impl StudyCell {
    pub fn count(&self, kind: CriterionKind) -> Usc {
        self.counts.get(&kind).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub design: DesignName,
    pub d: usize,
    pub n: usize,
    pub true_k: usize,
    pub k_range: KRange,
    pub replications: usize,
    pub base_seed: u64,
    pub fit_config: FitConfig,
    pub cells: Vec<StudyCell>,
    /// Wall-clock time; excluded from equality and from the JSON document.
    #[serde(skip)]
    pub runtime: Duration,
}

impl PartialEq for StudyReport {
    fn eq(&self, other: &Self) -> bool {
        self.design == other.design
            && self.d == other.d
            && self.n == other.n
            && self.true_k == other.true_k
            && self.k_range == other.k_range
            && self.replications == other.replications
            && self.base_seed == other.base_seed
            && self.fit_config == other.fit_config
            && self.cells == other.cells
    }
}

impl StudyReport {
    pub fn cell(&self, m: f64) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.m == m)
    }

    /// Table with one row per criterion and a `U,S,O` column triple per `m`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("criterion");
        for c in &self.cells {
            for tag in ["U", "S", "O"] {
                let _ = write!(out, ",m={}:{tag}", c.m);
            }
        }
        out.push('\n');
        for kind in CriterionKind::ALL {
            out.push_str(kind.name());
            for c in &self.cells {
                let u = c.count(kind);
                let _ = write!(out, ",{},{},{}", u.u, u.s, u.o);
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width rendering of [`Self::table_csv`].
    pub fn table_text(&self) -> String {
        let mut out = format!("{:<10}", "Criterion");
        for c in &self.cells {
            let _ = write!(out, "| {:^17}", format!("m = {}", c.m));
        }
        out.push('\n');
        out.push_str(&format!("{:<10}", ""));
        for _ in &self.cells {
            let _ = write!(out, "| {:>5}{:>5}{:>5}  ", "U", "S", "O");
        }
        out.push('\n');
        for kind in CriterionKind::ALL {
            let _ = write!(out, "{:<10}", kind.name());
            for c in &self.cells {
                let u = c.count(kind);
                let _ = write!(out, "| {:>5}{:>5}{:>5}  ", u.u, u.s, u.o);
            }
            out.push('\n');
        }
        out
    }
}

/// Study settings besides the design itself.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub m_grid: Vec<f64>,
    pub replications: usize,
    pub k_range: KRange,
    pub fit: FitConfig,
    pub base_seed: u64,
}

impl StudyConfig {
    /// Rate grid `{0, 0.95, 1, 1.05}`, 100 replications, `k` from 1 to
    /// `true_k + 3` (capped by `k_max`), default fit settings.
    pub fn for_design(design: &SyntheticDesign, base_seed: u64) -> Self {
        let d = design.params.dims().d;
        Self {
            m_grid: vec![0.0, 0.95, 1.0, 1.05],
            replications: 100,
            k_range: KRange::default_for(d, Some(design.true_k() + 3)),
            fit: FitConfig::default(),
            base_seed,
        }
    }
}

/// Runs every `(m, replication)` pair, in parallel across replications.
///
/// A replication fails when no `k` can be fitted; failures are excluded from
/// the counts, and more than 5% failures overall aborts the study.
pub fn run_study(design: &SyntheticDesign, cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.replications == 0 {
        return Err(FaError::Config("at least one replication is required".into()));
    }
    cfg.fit.validate()?;
    let d = design.params.dims().d;
    cfg.k_range.validate_for(d)?;
    let started = Instant::now();
    let truth = design.true_k();
    let label = design.name.as_str();

    let mut cells = Vec::with_capacity(cfg.m_grid.len());
    let mut failed = 0;
    for (m_index, &m) in cfg.m_grid.iter().enumerate() {
        let rates = design.rates(m)?;
        let outcomes: Vec<ReplicationOutcome> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.base_seed, label, m_index, rep);
                let result = run_replication(design, &rates, seed, cfg);
                match result {
                    Ok(chosen) => ReplicationOutcome {
                        replication: rep,
                        seed,
                        chosen_k: Some(chosen),
                        error: None,
                    },
                    Err(e) => ReplicationOutcome {
                        replication: rep,
                        seed,
                        chosen_k: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();

        let mut counts: BTreeMap<CriterionKind, Usc> =
            CriterionKind::ALL.iter().map(|&k| (k, Usc::default())).collect();
        let mut failures = 0;
        for o in &outcomes {
            match &o.chosen_k {
                Some(chosen) => {
                    for (kind, &k) in chosen {
                        counts.entry(*kind).or_default().record(k, truth);
                    }
                }
                None => failures += 1,
            }
        }
        failed += failures;
        cells.push(StudyCell {
            m,
            rates: rates.as_slice().to_vec(),
            counts,
            failures,
            replications: outcomes,
        });
    }

    let total = cfg.replications * cfg.m_grid.len();
    if failed * 20 > total {
        return Err(FaError::TooManyFailures { failed, total });
    }
    Ok(StudyReport {
        design: design.name,
        d,
        n: design.n,
        true_k: truth,
        k_range: cfg.k_range,
        replications: cfg.replications,
        base_seed: cfg.base_seed,
        fit_config: cfg.fit,
        cells,
        runtime: started.elapsed(),
    })
}

fn run_replication(
    design: &SyntheticDesign,
    rates: &MissingRates,
    seed: u64,
    cfg: &StudyConfig,
) -> Result<BTreeMap<CriterionKind, usize>> {
    let complete = draw_dataset(design, splitmix(seed ^ 0x5EED_DA7A));
    let masked = apply_mcar_mask(&complete, rates, splitmix(seed ^ 0x5EED_3A5C))?;
    let report = select_k(&masked, cfg.k_range, &cfg.fit, &CriterionKind::ALL)?;
    Ok(report.chosen_k)
}

//! Command-line front end. The binary is a thin wrapper around [`run`].
//!
//! Settings come from flags or from a TOML file given with `--config`; a flag
//! always wins over the same key in the file. Exit status is 0 on success, 2
//! for usage, configuration and input errors, 3 for numerical failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::criteria::{select_k, CriterionKind, KRange};
use crate::error::FaError;
use crate::estimation::{fit, Algorithm, FitConfig, FitWarning};
use crate::io::{read_csv_path, write_masked_csv, CsvOptions, DataError, Table};
use crate::missing::{apply_mcar_mask, MaskedMatrix, MissingRates};
use crate::model::FactorParams;
use crate::simulation::{build_design, run_study, scree_eigenvalues, DesignName, StudyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "incomplete-fa", version, about = "Factor analysis on incomplete data")]
pub struct Cli {
    /// TOML file with default settings; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel fits and replications.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a k-factor model and write its parameters as JSON.
    Fit(FitCmd),
    /// Fit a range of k and choose k by each criterion.
    Select(SelectCmd),
    /// Delete cells completely at random with per-variable rates.
    Mask(MaskCmd),
    /// Run a replicated study on a synthetic design.
    Simulate(SimulateCmd),
    /// Eigenvalues of the sample correlation matrix after mean imputation.
    Scree(ScreeCmd),
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Input CSV file.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Treat the first line as column names.
    #[arg(long)]
    pub header: bool,
    /// Extra token marking a missing cell (repeatable). Empty fields, NA and
    /// NaN are always missing.
    #[arg(long = "missing-token")]
    pub missing_tokens: Vec<String>,
}

#[derive(Debug, Args, Default)]
pub struct EstimationArgs {
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Lower bound on the uniquenesses.
    #[arg(long)]
    pub eta: Option<f64>,
    /// ecme or ecm.
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Number of factors.
    #[arg(long, short)]
    pub k: Option<usize>,
    /// JSON output path; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Upper limit applied to the default range when --k-max is absent.
    #[arg(long)]
    pub k_ceiling: Option<usize>,
    /// Comma-separated subset of aic,bic,caic,hbic.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<CriterionKind>,
    /// JSON report path; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// CSV of log-likelihood and scores against k.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskCmd {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated deletion probability per column.
    #[arg(long, value_delimiter = ',')]
    pub rates: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output path; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// low or high.
    #[arg(long)]
    pub design: Option<DesignName>,
    /// Comma-separated rate multipliers.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// JSON report path.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// CSV with the U/S/O table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreeCmd {
    #[command(flatten)]
    pub input: InputArgs,
    /// CSV output path; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Keys accepted in the `--config` file. All are optional.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub header: Option<bool>,
    pub missing_tokens: Option<Vec<String>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub eta: Option<f64>,
    pub algorithm: Option<Algorithm>,
    pub k: Option<usize>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub k_ceiling: Option<usize>,
    pub criteria: Option<Vec<CriterionKind>>,
    pub curves: Option<PathBuf>,
    pub rates: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub design: Option<DesignName>,
    pub m: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub table: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// The JSON document written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub k: usize,
    pub algorithm: Algorithm,
    pub params: FactorParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<FitWarning>,
    pub trace: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] FaError),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Data(DataError::Model(e)) | CliError::Model(e) => fa_exit_code(e),
            CliError::Data(_) => EXIT_USAGE,
        }
    }
}

fn fa_exit_code(e: &FaError) -> i32 {
    match e {
        FaError::NotPositiveDefinite { .. }
        | FaError::ZeroVariance { .. }
        | FaError::SingularWeights
        | FaError::SingularMomentSum { .. }
        | FaError::Iteration { .. }
        | FaError::NoSuccessfulFit
        | FaError::TooManyFailures { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Fit(c) => cmd_fit(c, &file),
        Command::Select(c) => cmd_select(c, &file),
        Command::Mask(c) => cmd_mask(c, &file),
        Command::Simulate(c) => cmd_simulate(c, &file),
        Command::Scree(c) => cmd_scree(c, &file),
    })
}

fn input_path(args: &InputArgs, file: &FileConfig) -> Result<PathBuf, CliError> {
    args.input
        .clone()
        .or_else(|| file.input.clone())
        .ok_or_else(|| CliError::Usage("an input CSV is required (--input)".into()))
}

fn csv_options(args: &InputArgs, file: &FileConfig) -> CsvOptions {
    let mut opts = CsvOptions {
        has_header: args.header || file.header.unwrap_or(false),
        ..CsvOptions::default()
    };
    let extra = if args.missing_tokens.is_empty() {
        file.missing_tokens.clone().unwrap_or_default()
    } else {
        args.missing_tokens.clone()
    };
    opts.missing_tokens.extend(extra);
    opts
}

fn fit_config(args: &EstimationArgs, file: &FileConfig) -> Result<FitConfig, CliError> {
    let base = FitConfig::default();
    let cfg = FitConfig {
        tol: args.tol.or(file.tol).unwrap_or(base.tol),
        max_iter: args.max_iter.or(file.max_iter).unwrap_or(base.max_iter),
        eta_floor: args.eta.or(file.eta).unwrap_or(base.eta_floor),
        algorithm: args.algorithm.or(file.algorithm).unwrap_or(base.algorithm),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn output_path(flag: &Option<PathBuf>, file: &FileConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| file.output.clone())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Usage(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_table(args: &InputArgs, file: &FileConfig) -> Result<Table, CliError> {
    let path = input_path(args, file)?;
    Ok(read_csv_path(&path, &csv_options(args, file))?)
}

pub fn cmd_fit(c: FitCmd, file: &FileConfig) -> Result<(), CliError> {
    let cfg = fit_config(&c.estimation, file)?;
    let k = c
        .k
        .or(file.k)
        .ok_or_else(|| CliError::Usage("the number of factors is required (--k)".into()))?;
    let path = input_path(&c.input, file)?;
    let output = output_path(&c.output, file);
    let table = read_csv_path(&path, &csv_options(&c.input, file))?;
    crate::model::ModelDims::new(table.data.ncols(), k)?;

    let result = fit(&table.data, k, &cfg)?;
    let doc = FitDocument {
        k,
        algorithm: cfg.algorithm,
        params: result.params,
        loglik: result.loglik,
        iterations: result.iterations,
        converged: result.converged,
        warnings: result.warnings,
        trace: result.trace,
    };
    write_json(output.as_deref(), &doc)
}

pub fn cmd_select(c: SelectCmd, file: &FileConfig) -> Result<(), CliError> {
    let cfg = fit_config(&c.estimation, file)?;
    let criteria = if c.criteria.is_empty() {
        file.criteria.clone().unwrap_or_else(|| CriterionKind::ALL.to_vec())
    } else {
        c.criteria.clone()
    };
    if criteria.is_empty() {
        return Err(CliError::Usage("no criterion requested".into()));
    }
    let k_min = c.k_min.or(file.k_min);
    let k_max = c.k_max.or(file.k_max);
    if let (Some(lo), Some(hi)) = (k_min, k_max) {
        if lo > hi {
            return Err(CliError::Usage(format!("empty k range [{lo}, {hi}]")));
        }
    }
    let output = output_path(&c.output, file);
    let curves = c.curves.clone().or_else(|| file.curves.clone());
    let table = load_table(&c.input, file)?;
    let d = table.data.ncols();

    let default = KRange::default_for(d, c.k_ceiling.or(file.k_ceiling));
    let range = KRange::new(k_min.unwrap_or(default.min), k_max.unwrap_or(default.max))?;
    range.validate_for(d)?;

    let report = select_k(&table.data, range, &cfg, &criteria)?;
    if let Some(p) = curves {
        write_text(&p, &report.curves_csv())?;
    }
    write_json(output.as_deref(), &report)
}

pub fn cmd_mask(c: MaskCmd, file: &FileConfig) -> Result<(), CliError> {
    let rates = if c.rates.is_empty() {
        file.rates.clone().unwrap_or_default()
    } else {
        c.rates.clone()
    };
    if rates.is_empty() {
        return Err(CliError::Usage("missing rates are required (--rates)".into()));
    }
    let rates = MissingRates::new(rates)?;
    let seed = c.seed.or(file.seed).unwrap_or(0);
    let output = output_path(&c.output, file);
    let table = load_table(&c.input, file)?;
    let data = &table.data;
    if rates.len() != data.ncols() {
        return Err(CliError::Usage(format!(
            "{} rates given for {} columns",
            rates.len(),
            data.ncols()
        )));
    }
    // Cells already missing in the input stay missing.
    let filled = data.values().map(|v| if v.is_nan() { 0.0 } else { v });
    let masked = apply_mcar_mask(&filled, &rates, seed)?;
    let mask = masked.mask().zip_map(data.mask(), |a, b| a && b);
    let out = MaskedMatrix::new(data.values().clone(), mask)?;
    let mut w = open_output(output.as_deref())?;
    write_masked_csv(&mut w, &out, table.header.as_deref())?;
    w.flush()?;
    Ok(())
}

pub fn cmd_simulate(c: SimulateCmd, file: &FileConfig) -> Result<(), CliError> {
    let fit_cfg = fit_config(&c.estimation, file)?;
    let name = c
        .design
        .or(file.design)
        .ok_or_else(|| CliError::Usage("a design is required (--design low|high)".into()))?;
    if name == DesignName::Custom {
        return Err(CliError::Usage("custom designs are only available through the library".into()));
    }
    let (design, _) = build_design(name, 0.0)?;
    let seed = c.seed.or(file.seed).unwrap_or(0);
    let mut cfg = StudyConfig::for_design(&design, seed);
    cfg.fit = fit_cfg;
    let m = if c.m.is_empty() { file.m.clone() } else { Some(c.m.clone()) };
    if let Some(m) = m {
        if m.is_empty() {
            return Err(CliError::Usage("empty --m grid".into()));
        }
        for &v in &m {
            design.rates(v)?;
        }
        cfg.m_grid = m;
    }
    if let Some(r) = c.reps.or(file.reps) {
        if r == 0 {
            return Err(CliError::Usage("--reps must be at least 1".into()));
        }
        cfg.replications = r;
    }
    let k_min = c.k_min.or(file.k_min).unwrap_or(cfg.k_range.min);
    let k_max = c.k_max.or(file.k_max).unwrap_or(cfg.k_range.max);
    if k_min > k_max {
        return Err(CliError::Usage(format!("empty k range [{k_min}, {k_max}]")));
    }
    cfg.k_range = KRange::new(k_min, k_max)?;
    cfg.k_range.validate_for(design.params.dims().d)?;
    let output = output_path(&c.output, file);
    let table_path = c.table.clone().or_else(|| file.table.clone());

    let report = run_study(&design, &cfg)?;
    if let Some(p) = &output {
        write_json(Some(p), &report)?;
    }
    if let Some(p) = &table_path {
        write_text(p, &report.table_csv())?;
    }
    let mut out = std::io::stdout().lock();
    write!(out, "{}", report.table_text())?;
    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        eprintln!("{failures} replications failed and were excluded");
    }
    eprintln!("runtime: {:.1}s", report.runtime.as_secs_f64());
    Ok(())
}

pub fn cmd_scree(c: ScreeCmd, file: &FileConfig) -> Result<(), CliError> {
    let output = output_path(&c.output, file);
    let table = load_table(&c.input, file)?;
    let eig = scree_eigenvalues(&table.data)?;
    let mut w = open_output(output.as_deref())?;
    writeln!(w, "eigenvalue")?;
    for v in eig {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}

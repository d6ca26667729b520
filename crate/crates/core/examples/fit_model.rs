//! Fit a k-factor model to incomplete data and print the estimates.
//!
//! ```text
//! cargo run --release --example fit_model              # simulated LowDim data
//! cargo run --release --example fit_model -- data.csv 2
//! ```
//!
//! A CSV argument must start with a header line; empty fields, NA and NaN
//! mark missing values.

use incomplete_fa::io::{read_csv_path, CsvOptions};
use incomplete_fa::{apply_mcar_mask, build_design, draw_dataset, fit, DesignName, FitConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (data, k) = match args.first() {
        Some(path) => {
            let table = read_csv_path(
                path.as_ref(),
                &CsvOptions { has_header: true, ..CsvOptions::default() },
            )?;
            let k = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
            (table.data, k)
        }
        None => {
            let (design, rates) = build_design(DesignName::LowDim, 1.0)?;
            let complete = draw_dataset(&design, 11);
            (apply_mcar_mask(&complete, &rates, 12)?, 3)
        }
    };
    println!(
        "{} rows, {} variables, {} of {} cells observed",
        data.nrows(),
        data.ncols(),
        data.total_observed(),
        data.nrows() * data.ncols()
    );

    let result = fit(&data, k, &FitConfig::default())?;
    println!(
        "k = {k}: log-likelihood {:.4} after {} iterations (converged: {})",
        result.loglik, result.iterations, result.converged
    );
    for w in &result.warnings {
        println!("warning: {w:?}");
    }
    println!("mean        {:.3}", result.params.mu().transpose());
    println!("loadings    {:.3}", result.params.loadings());
    println!("uniqueness  {:.4}", result.params.uniquenesses().transpose());
    Ok(())
}

//! Correlation eigenvalues of mean-imputed data, the usual input to a scree
//! plot and to the eigenvalue-above-one rule.

use incomplete_fa::{apply_mcar_mask, build_design, draw_dataset, scree_eigenvalues, DesignName};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (design, rates) = build_design(DesignName::LowDim, 1.0)?;
    let data = apply_mcar_mask(&draw_dataset(&design, 41), &rates, 42)?;
    let values = scree_eigenvalues(&data)?;
    let widest = values[0];
    for (i, v) in values.iter().enumerate() {
        let bar = "#".repeat((40.0 * v / widest).round() as usize);
        println!("{:>2} {v:>7.3} {bar}", i + 1);
    }
    println!("{} eigenvalues above one", values.iter().filter(|&&v| v > 1.0).count());
    Ok(())
}

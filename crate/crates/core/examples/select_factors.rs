//! Choose the number of factors with AIC, BIC, CAIC and HBIC.
//!
//! Prints the log-likelihood and every criterion score for each candidate k.

use incomplete_fa::{
    apply_mcar_mask, build_design, draw_dataset, select_k, CriterionKind, DesignName, FitConfig,
    KRange,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.05);
    let (design, rates) = build_design(DesignName::LowDim, m)?;
    let data = apply_mcar_mask(&draw_dataset(&design, 21), &rates, 22)?;
    println!("observed per variable: {:?}", data.n_obs_per_var());

    let report = select_k(&data, KRange::new(1, 6)?, &FitConfig::default(), &CriterionKind::ALL)?;
    print!("{:>3} {:>12}", "k", "loglik");
    for kind in CriterionKind::ALL {
        print!(" {:>12}", kind.name());
    }
    println!();
    for e in &report.entries {
        match e.loglik {
            Some(ll) => {
                print!("{:>3} {:>12.3}", e.k, ll);
                for kind in CriterionKind::ALL {
                    print!(" {:>12.3}", e.scores[&kind]);
                }
                println!();
            }
            None => println!("{:>3} failed: {}", e.k, e.error.as_deref().unwrap_or("")),
        }
    }
    for (kind, k) in &report.chosen_k {
        println!("{} chooses k = {k}", kind.name());
    }
    Ok(())
}

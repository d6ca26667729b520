//! Fit the same incomplete data with ECME and ECM from the same start and
//! compare the likelihood paths.

use incomplete_fa::{
    apply_mcar_mask, build_design, draw_dataset, fit_ecm, fit_ecme, init_pca, DesignName,
    FitConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (design, rates) = build_design(DesignName::LowDim, 1.0)?;
    let data = apply_mcar_mask(&draw_dataset(&design, 51), &rates, 52)?;
    let cfg = FitConfig::default();
    let init = init_pca(&data, 3, cfg.eta_floor)?;

    let ecme = fit_ecme(&data, 3, &cfg, &init)?;
    let ecm = fit_ecm(&data, 3, &cfg, &init)?;
    for (name, r) in [("ECME", &ecme), ("ECM", &ecm)] {
        println!(
            "{name:<5} loglik {:.6}  iterations {:>4}  converged {}",
            r.loglik, r.iterations, r.converged
        );
    }
    println!("difference {:.2e}", (ecme.loglik - ecm.loglik).abs());

    println!("{:>5} {:>14} {:>14}", "iter", "ECME", "ECM");
    for t in [0, 1, 2, 5, 10, 20, 50, 100] {
        let at = |trace: &[f64]| trace.get(t).or(trace.last()).copied().unwrap_or(f64::NAN);
        println!("{t:>5} {:>14.4} {:>14.4}", at(&ecme.trace), at(&ecm.trace));
    }
    Ok(())
}

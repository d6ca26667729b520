//! A replicated selection study on one of the synthetic designs.
//!
//! ```text
//! cargo run --release --example simulation_study -- low 20
//! cargo run --release --example simulation_study -- high 5
//! ```

use incomplete_fa::{build_design, run_study, DesignName, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name: DesignName = args.first().map(|s| s.parse()).transpose()?.unwrap_or(DesignName::LowDim);
    let reps: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(10);

    let (design, _) = build_design(name, 0.0)?;
    let mut cfg = StudyConfig::for_design(&design, 1);
    cfg.replications = reps;
    let report = run_study(&design, &cfg)?;

    println!(
        "{} design, d = {}, N = {}, true k = {}, {} replications per cell",
        name.as_str(),
        report.d,
        report.n,
        report.true_k,
        reps
    );
    print!("{}", report.table_text());
    println!("runtime {:.1}s", report.runtime.as_secs_f64());
    Ok(())
}

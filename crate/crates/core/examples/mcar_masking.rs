//! Delete values completely at random and inspect the resulting structure:
//! per-variable counts, their sorted order, row patterns and mean imputation.

use incomplete_fa::{
    apply_mcar_mask, build_design, draw_dataset, mean_impute, sorted_counts, DesignName,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (design, rates) = build_design(DesignName::LowDim, 1.0)?;
    let complete = draw_dataset(&design, 31);
    let data = apply_mcar_mask(&complete, &rates, 32)?;

    println!("rates     {:?}", rates.as_slice());
    println!("observed  {:?}", data.n_obs_per_var());
    let (order, sorted) = sorted_counts(&data);
    println!("ascending {sorted:?} (variables {order:?})");
    println!("{} distinct row patterns, {} empty rows", data.patterns().len(), data.n_empty_rows());

    let mut patterns: Vec<_> = data.patterns().iter().collect();
    patterns.sort_by_key(|p| std::cmp::Reverse(p.rows.len()));
    for p in patterns.iter().take(5) {
        println!("  {:>4} rows missing {:?}", p.rows.len(), p.missing);
    }

    let filled = mean_impute(&data)?;
    let means = filled.row_mean();
    println!("column means after imputation {:.3}", means);
    Ok(())
}

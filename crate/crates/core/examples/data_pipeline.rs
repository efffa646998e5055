//! Feature pipeline on household-style data: write a CSV, read it back with
//! an outlier cut, expand to degree-2 monomials, scale and project.

use caratheodory::bench::write_dataset_csv;
use caratheodory::data::{apply_pipeline, gen_household_like, load_csv, monomial_count, PipelineSpec};

fn main() -> caratheodory::Result<()> {
    let dir = std::env::temp_dir().join("caratheodory_pipeline_example");
    let path = dir.join("household.csv");
    write_dataset_csv(&gen_household_like(5_000, 2)?, &path)?;

    let loaded = load_csv(&path, &["x0", "x1", "x2"], "y", Some(3.6))?;
    println!("kept {} rows, dropped {:.2}% as outliers", loaded.dataset.n_samples(), 100.0 * loaded.drop_fraction());

    let spec = PipelineSpec { tensor_power_alpha: 2, scale: true, pca_components: Some(5), ..Default::default() };
    println!("degree-2 expansion of 3 features: {:?} columns", monomial_count(3, 2));
    let out = apply_pipeline(loaded.dataset.x(), &spec)?;
    println!(
        "after PCA: {} x {}, explained variance {:.3}",
        out.x.nrows(),
        out.x.ncols(),
        out.explained_variance.unwrap_or(1.0)
    );
    Ok(())
}

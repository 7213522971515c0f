//! The six-group wave-missing design and its effect on a dataset.
//!
//! cargo run --example planned_missing

use btba::datagen::{sample_mvn, SeedPlan};
use btba::missingness::{apply_design, MissingDesign};
use btba::model::{implied_moments, ModelShape, PopulationParams};

fn main() -> btba::Result<()> {
    let design = MissingDesign::swmd6();
    println!("group  T1 T2 T3 T4 T5");
    for (g, row) in design.pattern.iter().enumerate() {
        let cells: Vec<&str> = row.iter().map(|&o| if o { " O" } else { " -" }).collect();
        println!("{:>5} {}", g + 1, cells.join(" "));
    }
    println!("rows observing each wave (of 6): {:?}", design.wave_coverage());

    let shape = ModelShape::standard();
    let moments = implied_moments(&PopulationParams::illustrative(&shape), &shape)?;
    let complete = sample_mvn(&moments, 600, SeedPlan::new(7, 0, 0))?;
    let masked = apply_design(&complete, &design, &shape)?;
    let total = masked.n_rows() * masked.n_cols();
    let missing = total - masked.observed_count();
    println!(
        "{missing} of {total} cells missing ({:.4}; design fraction 5/30 = {:.4})",
        missing as f64 / total as f64,
        5.0 / 30.0
    );
    Ok(())
}

//! Draws one replication's complete data and writes it as CSV to stdout.
//!
//! cargo run --example generate_data > data.csv

use btba::datagen::{sample_mvn, SeedPlan};
use btba::model::{implied_moments, set_slope_correlation, ModelShape, PopulationParams};

fn main() -> btba::Result<()> {
    let shape = ModelShape::standard();
    let params = set_slope_correlation(&PopulationParams::illustrative(&shape), 0.3)?;
    let moments = implied_moments(&params, &shape)?;
    // 6 groups of 40 rows, replication 0 of condition 0.
    let data = sample_mvn(&moments, 240, SeedPlan::new(20240601, 0, 0))?;
    data.write_csv(std::io::stdout().lock(), &shape.variable_labels())?;
    Ok(())
}

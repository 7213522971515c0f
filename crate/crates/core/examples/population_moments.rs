//! Model-implied moments of the illustrative population.
//!
//! cargo run --example population_moments

use btba::model::{implied_moments, set_slope_correlation, ModelShape, PopulationParams};

fn main() -> btba::Result<()> {
    let shape = ModelShape::standard();
    let labels = shape.variable_labels();
    for rho in [0.1, 0.3, 0.55] {
        let params = set_slope_correlation(&PopulationParams::illustrative(&shape), rho)?;
        let m = implied_moments(&params, &shape)?;
        println!("rho = {rho}: slope correlation recovered as {}", params.slope_correlation()?);
        for (i, label) in labels.iter().enumerate().step_by(3).take(5) {
            println!("  {label:>8}  mean {:>6.3}  var {:>6.3}", m.mean[i], m.cov[(i, i)]);
        }
    }
    println!("{} observed variables in total", shape.n_observed());
    Ok(())
}

//! Fits the growth model to one complete and one planned-missing dataset.
//!
//! cargo run --release --example fiml_fit

use btba::datagen::{sample_mvn, SeedPlan};
use btba::estimator::{default_start, fit, OptimizerSettings};
use btba::missingness::{apply_design, MissingDesign};
use btba::model::{implied_moments, set_slope_correlation, ModelShape, PopulationParams};

fn main() -> btba::Result<()> {
    let shape = ModelShape::standard();
    let rho = 0.3;
    let params = set_slope_correlation(&PopulationParams::illustrative(&shape), rho)?;
    let moments = implied_moments(&params, &shape)?;
    let complete = sample_mvn(&moments, 6 * 300, SeedPlan::new(11, 0, 0))?;
    let masked = apply_design(&complete, &MissingDesign::swmd6(), &shape)?;

    for (name, data) in [("complete", &complete), ("SWMD-6", &masked)] {
        let start = default_start(data, &shape)?;
        let result = fit(data, &start, &OptimizerSettings::default())?;
        println!(
            "{name:>8}: estimate {:.4} (truth {rho}), loglik {:.2}, {} iterations, {} patterns, status {:?}",
            result.target_estimate, result.loglik, result.iterations, result.pattern_count, result.status
        );
        let natural = result.natural();
        println!("          slope means {:.3} / {:.3}", natural.growth_means[1], natural.growth_means[3]);
    }
    Ok(())
}

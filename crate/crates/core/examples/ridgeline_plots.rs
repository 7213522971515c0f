//! Ridgelines and boxplots from synthetic estimate samples.
//!
//! cargo run --example ridgeline_plots -- /tmp/btba-plots

use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;

use btba::datagen::SeedPlan;
use btba::diagnostics::{summarize, EstimateSample};
use btba::orchestration::{ConditionKey, DataCondition};
use btba::plots::{boxplot_reports, ridgeline_estimates, ridgeline_zstar, PanelLayout};

fn main() -> btba::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("btba-plots"));
    std::fs::create_dir_all(&out)?;

    let mut rng = SeedPlan::new(3, 0, 0).rng();
    let mut reports = Vec::new();
    for dc in [DataCondition::Complete, DataCondition::Swmd6Fiml] {
        for n in [40, 100, 1000] {
            let key = ConditionKey { data_condition: dc, rho: 0.3, n_per_group: n };
            // Spread shrinks with n; small samples get a downward shift.
            let sd = 0.6 / (n as f64).sqrt();
            let shift = if n == 40 { -0.4 * sd } else { 0.0 };
            let est: Vec<f64> = (0..500)
                .map(|_| 0.3 + shift + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut r = summarize(&EstimateSample::new(est, 0.3, "rho", key.id())?)?;
            r.condition = Some(key);
            reports.push(r);
        }
    }
    let layout = PanelLayout::default();
    std::fs::write(out.join("ridgeline_estimates.svg"), ridgeline_estimates(&reports, &layout)?)?;
    std::fs::write(out.join("ridgeline_zstar.svg"), ridgeline_zstar(&reports, &layout)?)?;
    std::fs::write(out.join("boxplot.svg"), boxplot_reports(&reports, &layout)?)?;
    println!("wrote three SVG files to {}", out.display());
    Ok(())
}

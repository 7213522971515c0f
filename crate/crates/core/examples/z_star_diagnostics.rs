//! Relative bias against Z* on a fixed absolute bias.
//!
//! The same 0.005 offset gives very different ARB values depending on the
//! size of the true value, while Z* depends only on bias relative to spread.
//!
//! cargo run --example z_star_diagnostics

use btba::diagnostics::{summarize, EstimateSample};

fn main() -> btba::Result<()> {
    let spread: Vec<f64> = (0..200).map(|i| 0.02 * (((i * 37) % 200) as f64 / 199.0 - 0.5)).collect();
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}  verdict", "truth", "ARB %", "RMSE", "M", "V");
    for truth in [0.1, 0.3, 0.55] {
        let estimates: Vec<f64> = spread.iter().map(|d| truth + 0.005 + d).collect();
        let r = summarize(&EstimateSample::new(estimates, truth, "rho", format!("truth {truth}"))?)?;
        println!(
            "{truth:>6} {:>8.3} {:>8.5} {:>8.3} {:>8.3}  {}",
            r.arb_percent.unwrap_or(f64::NAN),
            r.rmse,
            r.zstar_mean,
            r.zstar_var,
            r.verdict.verdict
        );
        assert!((r.zstar_mean.powi(2) + r.zstar_var - 1.0).abs() < 1e-12);
    }
    Ok(())
}

//! Evaluates estimates produced by other software.
//!
//! cargo run --example diagnose_external

use std::io::Write;

use btba::diagnostics::SummaryOptions;
use btba::orchestration::{diagnose, read_estimates, read_truths};

fn main() -> btba::Result<()> {
    let dir = std::env::temp_dir().join("btba-diagnose-example");
    std::fs::create_dir_all(&dir)?;
    let est_path = dir.join("estimates.csv");
    let truth_path = dir.join("truths.csv");

    let mut f = std::fs::File::create(&est_path)?;
    writeln!(f, "condition_id,replication_id,converged,estimate")?;
    for r in 0..100 {
        let wobble = ((r * 29) % 100) as f64 / 100.0 - 0.5;
        writeln!(f, "mplus-small,{r},{},{}", r % 25 != 0, 0.50 + 0.2 * wobble)?;
        writeln!(f, "mplus-large,{r},true,{}", 0.55 + 0.05 * wobble)?;
    }
    std::fs::write(&truth_path, "condition_id,truth\nmplus-small,0.55\nmplus-large,0.55\n")?;

    let reports = diagnose(&read_estimates(&est_path)?, &read_truths(&truth_path)?, &SummaryOptions::default())?;
    for r in &reports {
        println!(
            "{}: R = {} ({} excluded), RB = {:.4}, M = {:.3}, V = {:.3} -> {}",
            r.condition_id,
            r.replications,
            r.excluded,
            r.rb.unwrap_or(f64::NAN),
            r.zstar_mean,
            r.zstar_var,
            r.verdict.verdict
        );
    }
    Ok(())
}

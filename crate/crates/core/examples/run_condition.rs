//! Runs one grid cell and summarizes it.
//!
//! cargo run --release --example run_condition -- 0.55 40 50

use btba::diagnostics::SummaryOptions;
use btba::orchestration::{report_from_records, run_condition, ConditionSpec, DataCondition};

fn main() -> btba::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rho = args.first().and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let reps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);

    for dc in [DataCondition::Complete, DataCondition::Swmd6Fiml] {
        let spec = ConditionSpec::illustrative(rho, n, dc, reps);
        let records = run_condition(&spec, 20240601)?;
        let report = report_from_records(Some(spec.key()), &spec.id(), rho, &records, &SummaryOptions::default())?;
        println!(
            "{}: R = {}/{}, mean {:.4}, ARB {:.2}%, M = {:.3}, V = {:.3} -> {}",
            spec.id(),
            report.replications,
            records.len(),
            report.mean_estimate,
            report.arb_percent.unwrap_or(f64::NAN),
            report.zstar_mean,
            report.zstar_var,
            report.verdict.verdict
        );
    }
    Ok(())
}

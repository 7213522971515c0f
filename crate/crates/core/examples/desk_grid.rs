//! A small grid written to a run directory, then resumed.
//!
//! cargo run --release --example desk_grid -- /tmp/btba-desk

use std::path::PathBuf;

use btba::config::SimulationConfig;
use btba::orchestration::{run_grid, RunOptions};

fn main() -> btba::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("btba-desk-grid"));
    let mut config = SimulationConfig::default();
    config.design.rhos = vec![0.3, 0.55];
    config.design.n_per_group = vec![60, 300];

    let mut options = RunOptions::new(20240601, 30);
    options.progress = true;
    let first = run_grid(&config, &options, &out)?;
    print!("{}", first.table.to_text());

    // A second call finds every record file and recomputes nothing.
    let again = run_grid(&config, &options, &out)?;
    println!("resumed: {} reused, {} computed; output in {}", again.reused, again.computed, out.display());
    Ok(())
}

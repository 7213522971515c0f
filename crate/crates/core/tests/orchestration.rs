use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use btba::config::SimulationConfig;
use btba::diagnostics::Verdict;
use btba::orchestration::{
    read_records, replication_data, run_condition, run_grid, ConditionSpec, DataCondition, RunOptions,
};
use btba::Error;

fn small_config(rhos: &[f64], ns: &[usize], conditions: &[DataCondition]) -> SimulationConfig {
    let mut c = SimulationConfig::default();
    c.design.rhos = rhos.to_vec();
    c.design.n_per_group = ns.to_vec();
    c.design.data_conditions = conditions.to_vec();
    c
}

fn quiet(seed: u64, reps: usize) -> RunOptions {
    let mut o = RunOptions::new(seed, reps);
    o.progress = false;
    o
}

/// Every file under `dir`, relative path to bytes. Record CSVs have their
/// wall-time column blanked.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let bytes = fs::read(&path).unwrap();
            let bytes = if rel.starts_with("records") { strip_wall_time(&bytes) } else { bytes };
            out.insert(rel, bytes);
        }
    }
    out
}

fn strip_wall_time(csv: &[u8]) -> Vec<u8> {
    let text = String::from_utf8(csv.to_vec()).unwrap();
    text.lines()
        .map(|l| match l.rfind(',') {
            Some(i) if !l.starts_with('#') => &l[..i],
            _ => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

#[test]
fn records_do_not_depend_on_worker_count() {
    let spec = ConditionSpec::illustrative(0.3, 20, DataCondition::Swmd6Fiml, 6);
    let run = |jobs| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap();
        pool.install(|| run_condition(&spec, 77)).unwrap()
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.len(), 6);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.replication_id, y.replication_id);
        assert_eq!(x.status, y.status);
        assert_eq!(x.estimate.to_bits(), y.estimate.to_bits());
        assert_eq!(x.loglik.to_bits(), y.loglik.to_bits());
    }
}

#[test]
fn paired_cells_share_their_data() {
    let config = small_config(&[0.3], &[20], &[DataCondition::Complete, DataCondition::Swmd6Fiml]);
    let specs = config.conditions(3).unwrap();
    let complete = specs.iter().find(|s| s.data_condition == DataCondition::Complete).unwrap();
    let masked = specs.iter().find(|s| s.data_condition == DataCondition::Swmd6Fiml).unwrap();
    assert_eq!(complete.seed_index, masked.seed_index);

    let a = replication_data(complete, &complete.moments().unwrap(), 5, 2).unwrap();
    let b = replication_data(masked, &masked.moments().unwrap(), 5, 2).unwrap();
    assert_eq!(a.n_rows(), b.n_rows());
    assert!(b.observed_count() < a.observed_count());
    for i in 0..a.n_rows() {
        for (j, &seen) in b.mask_row(i).iter().enumerate() {
            if seen {
                assert_eq!(a.row(i)[j].to_bits(), b.row(i)[j].to_bits());
            }
        }
    }
    // Group 1 observes every wave, so its rows are identical.
    for i in (0..b.n_rows()).filter(|&i| b.groups()[i] == 1) {
        assert!(b.mask_row(i).iter().all(|&m| m));
    }
}

#[test]
fn one_cell_grid_writes_one_record_file_and_one_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(&[0.3], &[20], &[DataCondition::Complete]);
    let out = run_grid(&config, &quiet(11, 5), dir.path()).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert_eq!(fs::read_dir(dir.path().join("records")).unwrap().count(), 1);
    let reports: Vec<_> = fs::read_dir(dir.path().join("reports"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(reports.len(), 1);
    for f in ["manifest.json", "verdict_table.csv", "verdict_table.txt", "plots/ridgeline_estimates.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(out.table.rows, vec![20]);
    assert_eq!(out.table.columns.len(), 1);
}

#[test]
fn report_counts_only_converged_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(&[0.55], &[10], &[DataCondition::Swmd6Fiml]);
    let out = run_grid(&config, &quiet(3, 12), dir.path()).unwrap();
    let path = fs::read_dir(dir.path().join("records")).unwrap().next().unwrap().unwrap().path();
    let records = read_records(fs::File::open(path).unwrap()).unwrap();
    let converged = records.iter().filter(|r| r.converged).count();
    let report = &out.reports[0];
    assert_eq!(report.replications, converged);
    assert_eq!(report.excluded, records.len() - converged);
    assert_eq!(report.estimates.len(), converged);
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let config = small_config(&[0.1, 0.55], &[15], &[DataCondition::Complete, DataCondition::Swmd6Fiml]);
    let options = quiet(99, 4);

    let full = tempfile::tempdir().unwrap();
    run_grid(&config, &options, full.path()).unwrap();

    let partial = tempfile::tempdir().unwrap();
    run_grid(&config, &options, partial.path()).unwrap();
    // Simulate an interrupted run: one record file gone, one truncated,
    // derived outputs missing.
    let mut files: Vec<_> = fs::read_dir(partial.path().join("records"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    fs::remove_file(&files[0]).unwrap();
    let text = fs::read_to_string(&files[1]).unwrap();
    fs::write(&files[1], &text[..text.len() / 2]).unwrap();
    fs::remove_dir_all(partial.path().join("reports")).unwrap();
    fs::remove_file(partial.path().join("verdict_table.csv")).unwrap();

    let resumed = run_grid(&config, &options, partial.path()).unwrap();
    assert_eq!(resumed.computed, 2);
    assert_eq!(resumed.reused, 2);
    assert_eq!(snapshot(full.path()), snapshot(partial.path()));
}

#[test]
fn changed_config_in_existing_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(&[0.3], &[10], &[DataCondition::Complete]);
    run_grid(&config, &quiet(1, 3), dir.path()).unwrap();
    let err = run_grid(&config, &quiet(2, 3), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let other = small_config(&[0.1], &[10], &[DataCondition::Complete]);
    assert!(matches!(run_grid(&other, &quiet(1, 3), dir.path()), Err(Error::Config(_))));
}

#[test]
fn same_seed_same_bytes() {
    let config = small_config(&[0.3], &[12], &[DataCondition::Complete, DataCondition::Swmd6Fiml]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut opts_b = quiet(21, 4);
    opts_b.jobs = Some(2);
    let mut opts_a = quiet(21, 4);
    opts_a.jobs = Some(1);
    run_grid(&config, &opts_a, a.path()).unwrap();
    run_grid(&config, &opts_b, b.path()).unwrap();
    assert_eq!(snapshot(a.path()), snapshot(b.path()));
}

#[test]
fn verdict_table_has_the_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(&[0.1, 0.3], &[40, 25], &[DataCondition::Complete]);
    let out = run_grid(&config, &quiet(8, 4), dir.path()).unwrap();
    assert_eq!(out.table.rows, vec![40, 25]);
    assert_eq!(out.table.cells.len(), 2);
    assert!(out.table.cells.iter().all(|row| row.len() == 2));
    let csv = fs::read_to_string(dir.path().join("verdict_table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.table.get(40, DataCondition::Complete, 0.1).is_some_and(|v: Verdict| !v.label().is_empty()));
}

#[test]
fn cell_without_enough_fits_is_reported_missing() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(&[0.1, 0.3], &[30, 10], &[DataCondition::Complete]);
    match run_grid(&config, &quiet(8, 3), dir.path()) {
        Err(Error::MissingCell(ids)) => assert_eq!(ids, vec!["complete-r0.1-n10".to_string()]),
        other => panic!("expected a missing cell, got {:?}", other.map(|o| o.table.rows)),
    }
    // Records are still on disk for inspection.
    assert_eq!(fs::read_dir(dir.path().join("records")).unwrap().count(), 4);
}

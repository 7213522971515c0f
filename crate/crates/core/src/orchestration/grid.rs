//! Running a whole grid into an output directory.
//!
//! Layout of the directory:
//!
//! ```text
//! manifest.json
//! records/<condition_id>.csv
//! reports/<condition_id>.json
//! verdicts.csv
//! verdict_table.csv
//! verdict_table.txt
//! plots/ridgeline_estimates.svg
//! plots/ridgeline_zstar.svg
//! plots/boxplot_r<rho>.svg
//! ```
//!
//! A directory holding a manifest for the same configuration, seed and
//! replication count is resumed: record files that parse completely are
//! reused, anything else is recomputed. A manifest for a different run is an
//! error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Profile, SimulationConfig};
use crate::datagen::{NORMAL_METHOD, RNG_SCHEME};
use crate::diagnostics::BiasReport;
use crate::error::{Error, Result};
use crate::plots::{boxplot_reports, ridgeline_estimates, ridgeline_zstar, PanelLayout};

use super::table::{verdict_table_for_grid, write_verdict_csv, VerdictColumn, VerdictTable};
use super::{read_records, report_from_records, run_condition, write_records, ConditionSpec, DataCondition, ReplicationRecord};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCondition {
    pub condition_id: String,
    pub data_condition: DataCondition,
    pub rho: f64,
    pub n_per_group: usize,
    pub seed_index: u32,
}

/// Describes a run. Contains no timestamps, so identical runs write
/// identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub replications: usize,
    pub profile: Option<Profile>,
    pub rng: String,
    pub normal_method: String,
    pub conditions: Vec<ManifestCondition>,
    pub config: SimulationConfig,
}

impl Manifest {
    pub fn new(config: &SimulationConfig, options: &RunOptions, specs: &[ConditionSpec]) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            base_seed: options.base_seed,
            replications: options.replications,
            profile: options.profile,
            rng: RNG_SCHEME.to_string(),
            normal_method: NORMAL_METHOD.to_string(),
            conditions: specs
                .iter()
                .map(|s| ManifestCondition {
                    condition_id: s.id(),
                    data_condition: s.data_condition,
                    rho: s.rho,
                    n_per_group: s.n_per_group,
                    seed_index: s.seed_index,
                })
                .collect(),
            config: config.clone(),
        }
    }

    /// Whether `other` describes the same computation. The profile name
    /// does not matter as long as the replication count agrees.
    fn same_run(&self, other: &Manifest) -> bool {
        self.config_hash == other.config_hash
            && self.base_seed == other.base_seed
            && self.replications == other.replications
            && self.conditions == other.conditions
            && self.rng == other.rng
            && self.normal_method == other.normal_method
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub base_seed: u64,
    pub replications: usize,
    pub profile: Option<Profile>,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    pub plots: bool,
    pub layout: PanelLayout,
    /// Print one progress line per condition to stderr.
    pub progress: bool,
}

impl RunOptions {
    pub fn new(base_seed: u64, replications: usize) -> Self {
        Self {
            base_seed,
            replications,
            profile: None,
            jobs: None,
            plots: true,
            layout: PanelLayout::default(),
            progress: false,
        }
    }

    pub fn with_profile(base_seed: u64, profile: Profile) -> Self {
        Self {
            profile: Some(profile),
            ..Self::new(base_seed, profile.replications())
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub manifest: Manifest,
    pub reports: Vec<BiasReport>,
    pub table: VerdictTable,
    /// Conditions whose records were taken from an earlier run.
    pub reused: usize,
    pub computed: usize,
}

/// Atomically replaces `path` with `contents`.
fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// File-name-safe version of a condition id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

fn reusable_records(path: &Path, spec: &ConditionSpec, base_seed: u64) -> Option<Vec<ReplicationRecord>> {
    let file = fs::File::open(path).ok()?;
    let records = read_records(file).ok()?;
    let id = spec.id();
    let complete = records.len() == spec.replications
        && records.iter().enumerate().all(|(i, r)| {
            r.condition_id == id
                && r.replication_id as usize == i
                && r.base_seed == base_seed
                && r.seed_condition == spec.seed_index
                && r.seed_replication as usize == i
        });
    complete.then_some(records)
}

pub fn run_grid(config: &SimulationConfig, options: &RunOptions, out: &Path) -> Result<GridOutput> {
    config.validate()?;
    let specs = config.conditions(options.replications)?;
    let manifest = Manifest::new(config, options, &specs);

    fs::create_dir_all(out)?;
    let manifest_path = out.join("manifest.json");
    let resuming = match fs::read(&manifest_path) {
        Ok(bytes) => {
            let previous: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
                path: manifest_path.clone(),
                message: e.to_string(),
            })?;
            if !manifest.same_run(&previous) {
                return Err(Error::Config(format!(
                    "{} holds a run with a different configuration, seed or replication count",
                    out.display()
                )));
            }
            true
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(e.into()),
    };
    write_file(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;

    let records_dir = out.join("records");
    fs::create_dir_all(&records_dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = options.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let summary = config.diagnostics.summary_options();
    let mut reports = Vec::with_capacity(specs.len());
    let (mut reused, mut computed) = (0, 0);
    for (i, spec) in specs.iter().enumerate() {
        let id = spec.id();
        let path = records_dir.join(format!("{}.csv", file_stem(&id)));
        let existing = if resuming {
            reusable_records(&path, spec, options.base_seed)
        } else {
            None
        };
        let records = match existing {
            Some(r) => {
                reused += 1;
                r
            }
            None => {
                let records = pool.install(|| run_condition(spec, options.base_seed))?;
                let mut buf = Vec::new();
                write_records(&mut buf, &records)?;
                write_file(&path, &buf)?;
                computed += 1;
                records
            }
        };
        // A cell with fewer than two usable replications has no report; the
        // verdict table then lists it as missing.
        let report = match report_from_records(Some(spec.key()), &id, spec.rho, &records, &summary) {
            Ok(r) => r,
            Err(e) => {
                if options.progress {
                    eprintln!("[{}/{}] {id}: no report ({e})", i + 1, specs.len());
                }
                continue;
            }
        };
        if options.progress {
            eprintln!(
                "[{}/{}] {id}: R = {} of {}, M = {:.3}, V = {:.3}, {}",
                i + 1,
                specs.len(),
                report.replications,
                records.len(),
                report.zstar_mean,
                report.zstar_var,
                report.verdict.verdict
            );
        }
        reports.push(report);
    }

    write_reports(out, &reports)?;
    let rows: Vec<usize> = config.design.n_per_group.clone();
    let mut conditions = config.design.data_conditions.clone();
    conditions.sort();
    let mut rhos = config.design.rhos.clone();
    rhos.sort_by(f64::total_cmp);
    let columns: Vec<VerdictColumn> = conditions
        .iter()
        .flat_map(|&dc| rhos.iter().map(move |&rho| VerdictColumn { data_condition: dc, rho }))
        .collect();
    let table = verdict_table_for_grid(&reports, &rows, &columns)?;
    write_file(&out.join("verdict_table.csv"), table.to_csv()?.as_bytes())?;
    write_file(&out.join("verdict_table.txt"), table.to_text().as_bytes())?;

    if options.plots {
        write_plots(out, &reports, &options.layout)?;
    }

    Ok(GridOutput {
        manifest,
        reports,
        table,
        reused,
        computed,
    })
}

/// Writes `reports/<id>.json` and `verdicts.csv` under `out`.
pub fn write_reports(out: &Path, reports: &[BiasReport]) -> Result<()> {
    let dir = out.join("reports");
    fs::create_dir_all(&dir)?;
    let mut stems = BTreeMap::new();
    for r in reports {
        let stem = file_stem(&r.condition_id);
        if let Some(other) = stems.insert(stem.clone(), r.condition_id.clone()) {
            return Err(Error::Domain(format!(
                "conditions {other:?} and {:?} map to the same file name",
                r.condition_id
            )));
        }
        let mut json = serde_json::to_vec_pretty(r)?;
        json.push(b'\n');
        write_file(&dir.join(format!("{stem}.json")), &json)?;
    }
    let mut buf = Vec::new();
    write_verdict_csv(&mut buf, reports)?;
    write_file(&out.join("verdicts.csv"), &buf)
}

/// Ridgelines of all reports and one boxplot panel per ρ.
pub fn write_plots(out: &Path, reports: &[BiasReport], layout: &PanelLayout) -> Result<Vec<PathBuf>> {
    let dir = out.join("plots");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, svg.as_bytes())?;
        written.push(path);
        Ok(())
    };
    emit("ridgeline_estimates.svg".into(), ridgeline_estimates(reports, layout)?)?;
    emit("ridgeline_zstar.svg".into(), ridgeline_zstar(reports, layout)?)?;
    let mut by_truth: Vec<(f64, Vec<BiasReport>)> = Vec::new();
    for r in reports {
        match by_truth.iter_mut().find(|(t, _)| *t == r.truth) {
            Some((_, group)) => group.push(r.clone()),
            None => by_truth.push((r.truth, vec![r.clone()])),
        }
    }
    by_truth.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (truth, group) in by_truth {
        let layout = PanelLayout {
            title: Some(format!("Estimates, population value {truth}")),
            ..layout.clone()
        };
        emit(format!("boxplot_r{truth}.svg"), boxplot_reports(&group, &layout)?)?;
    }
    Ok(written)
}

/// Loads every `*.json` report from `dir`, or from `dir/reports` when that
/// exists. Reports come back sorted by condition id.
pub fn load_reports(dir: &Path) -> Result<Vec<BiasReport>> {
    let nested = dir.join("reports");
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = fs::read(&p)?;
        let report: BiasReport = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: p.clone(),
            message: e.to_string(),
        })?;
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(Error::Format {
            path: dir,
            message: "no report files found".into(),
        });
    }
    reports.sort_by(|a, b| a.condition_id.cmp(&b.condition_id));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("complete-r0.3-n40"), "complete-r0.3-n40");
        assert_eq!(file_stem("a/b c"), "a_b_c");
    }
}

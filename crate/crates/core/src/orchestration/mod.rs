//! Condition grid, replication runs and result assembly.

mod grid;
mod ingest;
mod table;

pub use grid::{load_reports, run_grid, write_plots, write_reports, GridOutput, Manifest, ManifestCondition, RunOptions};
pub use ingest::{diagnose, read_estimates, read_truths, ExternalEstimate};
pub use table::{verdict_table, verdict_table_for_grid, write_verdict_csv, VerdictColumn, VerdictTable};

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_mvn, Dataset, SeedPlan, GROUPS};
use crate::diagnostics::{summarize_with, BiasReport, EstimateSample, SummaryOptions};
use crate::error::{Error, Result};
use crate::estimator::{default_start, fit, FitStatus, OptimizerSettings};
use crate::missingness::{apply_design, MissingDesign};
use crate::model::{implied_moments, set_slope_correlation, MomentStructure, ModelShape, PopulationParams};

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const TARGET_LABEL: &str = "slope-slope correlation";

/// Estimates at or beyond this magnitude are treated as improper solutions.
pub const CORRELATION_BOUNDARY: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataCondition {
    Complete,
    Swmd6Fiml,
}

impl DataCondition {
    pub fn slug(self) -> &'static str {
        match self {
            Self::Complete => "complete",
            Self::Swmd6Fiml => "swmd6",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Complete => "Complete",
            Self::Swmd6Fiml => "SWMD-6 FIML",
        }
    }
}

impl fmt::Display for DataCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Identifies one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionKey {
    pub data_condition: DataCondition,
    pub rho: f64,
    pub n_per_group: usize,
}

impl ConditionKey {
    /// E.g. `complete-r0.3-n1000` or `swmd6-r0.55-n40`.
    pub fn id(&self) -> String {
        format!("{}-r{}-n{}", self.data_condition.slug(), self.rho, self.n_per_group)
    }
}

impl FromStr for ConditionKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("{s:?} is not a condition id"));
        let mut parts = s.splitn(3, '-');
        let (dc, r, n) = (
            parts.next().ok_or_else(bad)?,
            parts.next().ok_or_else(bad)?,
            parts.next().ok_or_else(bad)?,
        );
        let data_condition = match dc {
            "complete" => DataCondition::Complete,
            "swmd6" => DataCondition::Swmd6Fiml,
            _ => return Err(bad()),
        };
        let rho: f64 = r.strip_prefix('r').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let n_per_group = n.strip_prefix('n').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let key = Self {
            data_condition,
            rho,
            n_per_group,
        };
        if key.id() != s {
            return Err(bad());
        }
        Ok(key)
    }
}

/// Everything needed to run one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    pub rho: f64,
    pub n_per_group: usize,
    pub data_condition: DataCondition,
    pub replications: usize,
    /// Seed stream index. Cells with equal (ρ, n) share it.
    pub seed_index: u32,
    pub shape: ModelShape,
    /// Base population; the slope correlation is replaced by `rho`.
    pub population: PopulationParams,
    pub optimizer: OptimizerSettings,
}

impl ConditionSpec {
    /// A cell with the standard shape, illustrative population and default
    /// optimizer settings.
    pub fn illustrative(rho: f64, n_per_group: usize, data_condition: DataCondition, replications: usize) -> Self {
        let shape = ModelShape::standard();
        Self {
            rho,
            n_per_group,
            data_condition,
            replications,
            seed_index: 0,
            population: PopulationParams::illustrative(&shape),
            shape,
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn key(&self) -> ConditionKey {
        ConditionKey {
            data_condition: self.data_condition,
            rho: self.rho,
            n_per_group: self.n_per_group,
        }
    }

    pub fn id(&self) -> String {
        self.key().id()
    }

    pub fn total_rows(&self) -> usize {
        GROUPS * self.n_per_group
    }

    pub fn moments(&self) -> Result<MomentStructure> {
        let params = set_slope_correlation(&self.population, self.rho)?;
        implied_moments(&params, &self.shape)
    }

    fn validate(&self) -> Result<()> {
        if self.n_per_group == 0 {
            return Err(Error::Domain("n_per_group must be positive".into()));
        }
        if u32::try_from(self.replications).is_err() {
            return Err(Error::Domain("too many replications".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Converged,
    NotConverged,
    BoundaryVariance,
    /// |estimate| ≥ 0.999.
    BoundaryCorrelation,
    /// Data generation or the likelihood failed outright.
    Failed,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub condition_id: String,
    pub replication_id: u32,
    pub base_seed: u64,
    pub seed_condition: u32,
    pub seed_replication: u32,
    /// True only for usable replications; these make up R.
    pub converged: bool,
    pub status: RecordStatus,
    pub estimate: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub wall_time_ms: u64,
}

/// The dataset a replication fits: `6·n_per_group` complete rows, masked by
/// the six-group wave design for the FIML condition.
pub fn replication_data(spec: &ConditionSpec, moments: &MomentStructure, base_seed: u64, replication: u32) -> Result<Dataset> {
    let seed = SeedPlan::new(base_seed, spec.seed_index, replication);
    let mut data = sample_mvn(moments, spec.total_rows(), seed)?;
    if spec.data_condition == DataCondition::Swmd6Fiml {
        data = apply_design(&data, &MissingDesign::swmd6(), &spec.shape)?;
    }
    data.condition_id = spec.id();
    Ok(data)
}

pub fn run_replication(spec: &ConditionSpec, moments: &MomentStructure, base_seed: u64, replication: u32) -> ReplicationRecord {
    let started = Instant::now();
    let mut record = ReplicationRecord {
        condition_id: spec.id(),
        replication_id: replication,
        base_seed,
        seed_condition: spec.seed_index,
        seed_replication: replication,
        converged: false,
        status: RecordStatus::Failed,
        estimate: f64::NAN,
        loglik: f64::NAN,
        iterations: 0,
        gradient_norm: f64::NAN,
        wall_time_ms: 0,
    };
    let outcome = replication_data(spec, moments, base_seed, replication).and_then(|data| {
        let start = default_start(&data, &spec.shape)?;
        fit(&data, &start, &spec.optimizer)
    });
    if let Ok(fit) = outcome {
        record.estimate = fit.target_estimate;
        record.loglik = fit.loglik;
        record.iterations = fit.iterations;
        record.gradient_norm = fit.gradient_norm;
        record.status = match fit.status {
            FitStatus::NotConverged => RecordStatus::NotConverged,
            FitStatus::BoundaryVariance => RecordStatus::BoundaryVariance,
            FitStatus::Converged if fit.target_estimate.abs() >= CORRELATION_BOUNDARY => {
                RecordStatus::BoundaryCorrelation
            }
            FitStatus::Converged => RecordStatus::Converged,
        };
        record.converged = record.status == RecordStatus::Converged;
    }
    record.wall_time_ms = started.elapsed().as_millis() as u64;
    record
}

/// Runs every replication of a cell on the current rayon pool. Records come
/// back in replication order whatever the number of workers.
pub fn run_condition(spec: &ConditionSpec, base_seed: u64) -> Result<Vec<ReplicationRecord>> {
    spec.validate()?;
    if spec.replications == 0 {
        return Ok(Vec::new());
    }
    let moments = spec.moments()?;
    Ok((0..spec.replications as u32)
        .into_par_iter()
        .map(|r| run_replication(spec, &moments, base_seed, r))
        .collect())
}

/// Summarizes the converged records of one cell against `truth`.
pub fn report_from_records(
    key: Option<ConditionKey>,
    condition_id: &str,
    truth: f64,
    records: &[ReplicationRecord],
    options: &SummaryOptions,
) -> Result<BiasReport> {
    let estimates: Vec<f64> = records.iter().filter(|r| r.converged).map(|r| r.estimate).collect();
    let sample = EstimateSample::new(estimates, truth, TARGET_LABEL, condition_id)?;
    let mut report = summarize_with(&sample, options)?;
    report.condition = key;
    report.excluded = records.len() - report.replications;
    Ok(report)
}

pub fn write_records<W: Write>(writer: W, records: &[ReplicationRecord]) -> Result<()> {
    let mut writer = writer;
    writeln!(writer, "# schema_version={RECORD_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<ReplicationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_ids_round_trip() {
        for key in [
            ConditionKey {
                data_condition: DataCondition::Complete,
                rho: 0.3,
                n_per_group: 1000,
            },
            ConditionKey {
                data_condition: DataCondition::Swmd6Fiml,
                rho: 0.55,
                n_per_group: 40,
            },
        ] {
            let id = key.id();
            assert_eq!(id.parse::<ConditionKey>().unwrap(), key);
        }
        assert_eq!(
            ConditionSpec::illustrative(0.1, 60, DataCondition::Complete, 1).id(),
            "complete-r0.1-n60"
        );
        assert!("complete-0.3-n10".parse::<ConditionKey>().is_err());
        assert!("study-r0.3-n10".parse::<ConditionKey>().is_err());
    }

    #[test]
    fn zero_replications_is_empty() {
        let spec = ConditionSpec::illustrative(0.3, 40, DataCondition::Complete, 0);
        assert!(run_condition(&spec, 1).unwrap().is_empty());
    }

    #[test]
    fn records_round_trip_through_csv() {
        let spec = ConditionSpec::illustrative(0.3, 40, DataCondition::Swmd6Fiml, 2);
        let records = run_condition(&spec, 9).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        assert!(buf.starts_with(b"# schema_version=1\n"));
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn fiml_cell_masks_the_paired_complete_data() {
        let c = ConditionSpec::illustrative(0.3, 12, DataCondition::Complete, 1);
        let mut s = c.clone();
        s.data_condition = DataCondition::Swmd6Fiml;
        let m = c.moments().unwrap();
        let a = replication_data(&c, &m, 4, 0).unwrap();
        let b = replication_data(&s, &m, 4, 0).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(b.observed_count(), a.observed_count() * 25 / 30);
    }
}

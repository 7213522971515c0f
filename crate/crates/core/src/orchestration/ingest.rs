//! Reading estimates produced elsewhere.
//!
//! Estimates: CSV with columns `condition_id, replication_id, converged,
//! estimate`. Truths: CSV with columns `condition_id, truth`. Lines starting
//! with `#` are ignored, so files may open with a `# schema_version=1` line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use crate::diagnostics::{BiasReport, SummaryOptions};
use crate::error::{Error, Result};

use super::{report_from_records, ConditionKey, RecordStatus, ReplicationRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEstimate {
    pub condition_id: String,
    pub replication_id: u64,
    pub converged: bool,
    pub estimate: f64,
}

#[derive(Deserialize)]
struct EstimateRow {
    condition_id: String,
    replication_id: u64,
    converged: String,
    estimate: String,
}

#[derive(Deserialize)]
struct TruthRow {
    condition_id: String,
    truth: f64,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

pub fn read_estimates(path: &Path) -> Result<Vec<ExternalEstimate>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, row) in rdr.deserialize::<EstimateRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| format_error(path, format!("row {line}: {e}")))?;
        let converged = parse_bool(&row.converged).ok_or_else(|| {
            format_error(path, format!("row {line}: converged must be true or false, got {:?}", row.converged))
        })?;
        let estimate = if row.estimate.is_empty() && !converged {
            f64::NAN
        } else {
            row.estimate
                .parse::<f64>()
                .map_err(|_| format_error(path, format!("row {line}: bad estimate {:?}", row.estimate)))?
        };
        if converged && !estimate.is_finite() {
            return Err(format_error(path, format!("row {line}: converged estimate is not finite")));
        }
        if !seen.insert((row.condition_id.clone(), row.replication_id)) {
            return Err(format_error(
                path,
                format!("row {line}: duplicate replication {} of {}", row.replication_id, row.condition_id),
            ));
        }
        out.push(ExternalEstimate {
            condition_id: row.condition_id,
            replication_id: row.replication_id,
            converged,
            estimate,
        });
    }
    Ok(out)
}

pub fn read_truths(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = reader(path)?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<TruthRow>().enumerate() {
        let row = row.map_err(|e| format_error(path, format!("row {}: {e}", i + 2)))?;
        if out.insert(row.condition_id.clone(), row.truth).is_some() {
            return Err(format_error(path, format!("duplicate truth for {}", row.condition_id)));
        }
    }
    Ok(out)
}

/// One report per condition, in condition-id order. Ids that follow the
/// grid naming scheme get grid coordinates attached.
pub fn diagnose(
    estimates: &[ExternalEstimate],
    truths: &BTreeMap<String, f64>,
    options: &SummaryOptions,
) -> Result<Vec<BiasReport>> {
    let mut by_condition: BTreeMap<&str, Vec<ReplicationRecord>> = BTreeMap::new();
    for e in estimates {
        by_condition.entry(&e.condition_id).or_default().push(ReplicationRecord {
            condition_id: e.condition_id.clone(),
            replication_id: 0,
            base_seed: 0,
            seed_condition: 0,
            seed_replication: 0,
            converged: e.converged,
            status: if e.converged { RecordStatus::Converged } else { RecordStatus::NotConverged },
            estimate: e.estimate,
            loglik: f64::NAN,
            iterations: 0,
            gradient_norm: f64::NAN,
            wall_time_ms: 0,
        });
    }
    let missing: Vec<String> = by_condition
        .keys()
        .filter(|id| !truths.contains_key(**id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Domain(format!("no truth given for conditions {missing:?}")));
    }
    by_condition
        .iter()
        .map(|(id, records)| {
            let key = id.parse::<ConditionKey>().ok();
            report_from_records(key, id, truths[*id], records, options)
        })
        .collect()
}

use std::collections::BTreeSet;
use std::io::Write;

use crate::diagnostics::{BiasReport, Verdict};
use crate::error::{Error, Result};

use super::{ConditionKey, DataCondition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictColumn {
    pub data_condition: DataCondition,
    pub rho: f64,
}

impl VerdictColumn {
    fn header(&self) -> String {
        format!("{} rho={}", self.data_condition.label(), self.rho)
    }
}

/// Verdicts keyed by sample size (rows, largest first) and data condition ×
/// correlation (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictTable {
    pub rows: Vec<usize>,
    pub columns: Vec<VerdictColumn>,
    pub cells: Vec<Vec<Verdict>>,
}

fn key_of(report: &BiasReport) -> Result<ConditionKey> {
    match report.condition {
        Some(k) => Ok(k),
        None => report.condition_id.parse().map_err(|_| {
            Error::Domain(format!(
                "report {:?} carries no grid coordinates",
                report.condition_id
            ))
        }),
    }
}

/// Builds the table over every (n, condition, ρ) combination present in
/// `reports`. Combinations without a report are listed in `MissingCell`.
pub fn verdict_table(reports: &[BiasReport]) -> Result<VerdictTable> {
    let keys = reports.iter().map(key_of).collect::<Result<Vec<_>>>()?;
    let rows: BTreeSet<usize> = keys.iter().map(|k| k.n_per_group).collect();
    let conditions: BTreeSet<DataCondition> = keys.iter().map(|k| k.data_condition).collect();
    let mut rhos: Vec<f64> = keys.iter().map(|k| k.rho).collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let columns: Vec<VerdictColumn> = conditions
        .iter()
        .flat_map(|&dc| rhos.iter().map(move |&rho| VerdictColumn { data_condition: dc, rho }))
        .collect();
    verdict_table_for_grid(reports, &rows.into_iter().collect::<Vec<_>>(), &columns)
}

/// Builds the table for an explicit grid. Rows are sorted largest first.
pub fn verdict_table_for_grid(
    reports: &[BiasReport],
    rows: &[usize],
    columns: &[VerdictColumn],
) -> Result<VerdictTable> {
    let mut rows = rows.to_vec();
    rows.sort_unstable_by(|a, b| b.cmp(a));
    rows.dedup();
    let keys = reports.iter().map(key_of).collect::<Result<Vec<_>>>()?;
    let mut cells = vec![vec![None; columns.len()]; rows.len()];
    for (key, report) in keys.iter().zip(reports) {
        let row = rows.iter().position(|&n| n == key.n_per_group);
        let col = columns
            .iter()
            .position(|c| c.data_condition == key.data_condition && c.rho == key.rho);
        if let (Some(i), Some(j)) = (row, col) {
            if cells[i][j].is_some() {
                return Err(Error::Domain(format!("two reports for cell {}", key.id())));
            }
            cells[i][j] = Some(report.verdict.verdict);
        }
    }
    let mut missing = Vec::new();
    for (i, &n) in rows.iter().enumerate() {
        for (j, c) in columns.iter().enumerate() {
            if cells[i][j].is_none() {
                let key = ConditionKey {
                    data_condition: c.data_condition,
                    rho: c.rho,
                    n_per_group: n,
                };
                missing.push(key.id());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCell(missing));
    }
    Ok(VerdictTable {
        rows,
        columns: columns.to_vec(),
        cells: cells
            .into_iter()
            .map(|r| r.into_iter().map(|c| c.expect("filled")).collect())
            .collect(),
    })
}

impl VerdictTable {
    pub fn get(&self, n_per_group: usize, data_condition: DataCondition, rho: f64) -> Option<Verdict> {
        let i = self.rows.iter().position(|&n| n == n_per_group)?;
        let j = self
            .columns
            .iter()
            .position(|c| c.data_condition == data_condition && c.rho == rho)?;
        Some(self.cells[i][j])
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n_per_group".to_string()];
        header.extend(self.columns.iter().map(VerdictColumn::header));
        w.write_record(&header)?;
        for (n, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![n.to_string()];
            rec.extend(row.iter().map(|v| v.label().to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned plain text with a two-line header: data condition, then ρ.
    pub fn to_text(&self) -> String {
        let width = self
            .cells
            .iter()
            .flatten()
            .map(|v| v.label().len())
            .chain(self.columns.iter().map(|c| c.data_condition.label().len()))
            .max()
            .unwrap_or(8);
        let first = "n".len().max(self.rows.iter().map(|n| n.to_string().len()).max().unwrap_or(1));
        let mut out = String::new();
        let mut line = format!("{:>first$}", "");
        let mut prev = None;
        for c in &self.columns {
            let label = if prev == Some(c.data_condition) { "" } else { c.data_condition.label() };
            prev = Some(c.data_condition);
            line.push_str(&format!("  {label:<width$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        let mut line = format!("{:>first$}", "n");
        for c in &self.columns {
            line.push_str(&format!("  {:<width$}", format!("rho = {}", c.rho)));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        for (n, row) in self.rows.iter().zip(&self.cells) {
            let mut line = format!("{n:>first$}");
            for v in row {
                line.push_str(&format!("  {:<width$}", v.label()));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// One line per report: identifiers, R, M, V, verdict and the classic metrics.
pub fn write_verdict_csv<W: Write>(writer: W, reports: &[BiasReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "condition_id",
        "truth",
        "replications",
        "excluded",
        "mean_estimate",
        "bias",
        "rb",
        "arb_percent",
        "rmse",
        "m",
        "v",
        "verdict",
    ])?;
    for r in reports {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.condition_id.clone(),
            r.truth.to_string(),
            r.replications.to_string(),
            r.excluded.to_string(),
            r.mean_estimate.to_string(),
            r.bias.to_string(),
            opt(r.rb),
            opt(r.arb_percent),
            r.rmse.to_string(),
            r.zstar_mean.to_string(),
            r.zstar_var.to_string(),
            r.verdict.verdict.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{summarize, EstimateSample};

    fn report(dc: DataCondition, rho: f64, n: usize, offset: f64) -> BiasReport {
        let key = ConditionKey {
            data_condition: dc,
            rho,
            n_per_group: n,
        };
        let est = vec![rho + offset + 0.01, rho + offset - 0.01];
        let mut r = summarize(&EstimateSample::new(est, rho, "p", key.id()).unwrap()).unwrap();
        r.condition = Some(key);
        r
    }

    #[test]
    fn table_layout_and_missing_cells() {
        let mut reports = Vec::new();
        for dc in [DataCondition::Complete, DataCondition::Swmd6Fiml] {
            for rho in [0.1, 0.55] {
                for n in [40, 1000] {
                    reports.push(report(dc, rho, n, 0.0));
                }
            }
        }
        let t = verdict_table(&reports).unwrap();
        assert_eq!(t.rows, vec![1000, 40]);
        assert_eq!(t.columns.len(), 4);
        assert!(t.cells.iter().flatten().all(|&v| v == Verdict::Accept));

        reports[0] = report(DataCondition::Complete, 0.1, 40, 0.05);
        let t = verdict_table(&reports).unwrap();
        assert_eq!(t.get(40, DataCondition::Complete, 0.1), Some(Verdict::Reject));

        reports.remove(1);
        match verdict_table(&reports) {
            Err(Error::MissingCell(cells)) => assert_eq!(cells, vec!["complete-r0.1-n1000"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renders_csv_and_text() {
        let reports = vec![
            report(DataCondition::Complete, 0.3, 100, 0.0),
            report(DataCondition::Complete, 0.3, 40, 0.0),
        ];
        let t = verdict_table(&reports).unwrap();
        assert_eq!(
            t.to_csv().unwrap(),
            "n_per_group,Complete rho=0.3\n100,Accept\n40,Accept\n"
        );
        let text = t.to_text();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().contains("rho = 0.3"));
    }
}

//! Bias diagnostics for a set of replication estimates.
//!
//! * relative bias `(mean − θ) / θ` and its absolute percentage,
//! * RMSE about the true value,
//! * the standardized bias `Z*_r = (θ̂_r − θ) / RMSE` for every replication,
//!   summarized by its mean `M` and variance `V`,
//! * the decision-matrix verdict derived from `(M, V)`.
//!
//! With the population (divide-by-R) variance, `M² + V = 1` holds exactly:
//! the mean square of `Z*` is one by construction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestration::ConditionKey;

pub const DEFAULT_ZERO_GUARD: f64 = 1e-8;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// Denominator R.
    #[default]
    Population,
    /// Denominator R − 1.
    Sample,
}

/// Converged estimates of one parameter in one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSample {
    pub estimates: Vec<f64>,
    pub truth: f64,
    pub parameter_label: String,
    pub condition_id: String,
}

impl EstimateSample {
    pub fn new(
        estimates: Vec<f64>,
        truth: f64,
        parameter_label: impl Into<String>,
        condition_id: impl Into<String>,
    ) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::EmptySample);
        }
        if !truth.is_finite() || estimates.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("estimates and truth must be finite".into()));
        }
        Ok(Self {
            estimates,
            truth,
            parameter_label: parameter_label.into(),
            condition_id: condition_id.into(),
        })
    }
}

pub fn relative_bias(estimate_mean: f64, truth: f64) -> Result<f64> {
    relative_bias_with_guard(estimate_mean, truth, DEFAULT_ZERO_GUARD)
}

pub fn relative_bias_with_guard(estimate_mean: f64, truth: f64, zero_guard: f64) -> Result<f64> {
    if !(truth.abs() >= zero_guard) {
        return Err(Error::NearZeroTruth {
            truth,
            guard: zero_guard,
        });
    }
    Ok((estimate_mean - truth) / truth)
}

/// Absolute relative bias in percent.
pub fn arb_percent(rb: f64) -> f64 {
    100.0 * rb.abs()
}

pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptySample);
    }
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64;
    Ok(mse.sqrt())
}

/// Per-replication standardized bias.
pub fn zstar(estimates: &[f64], truth: f64) -> Result<Vec<f64>> {
    let scale = rmse(estimates, truth)?;
    if scale == 0.0 {
        return Err(Error::ZeroRmse);
    }
    Ok(estimates.iter().map(|e| (e - truth) / scale).collect())
}

/// Mean and variance with the requested denominator. A single value has
/// zero sample variance by convention.
pub fn mean_and_variance(values: &[f64], kind: VarianceKind) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let var = match kind {
        VarianceKind::Population => ss / n,
        VarianceKind::Sample if values.len() > 1 => ss / (n - 1.0),
        VarianceKind::Sample => 0.0,
    };
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    AcceptWithCaution,
    ResearchDependent,
    Reject,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Self::Accept => "Accept",
            Self::AcceptWithCaution => "Accept with caution",
            Self::ResearchDependent => "Research dependent",
            Self::Reject => "Reject",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Decision-matrix row that produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRow {
    NearZeroBias,
    MildBias,
    ModerateBias,
    MeaningfulBias,
    /// RMSE is zero; Z* is undefined and the estimator is exactly unbiased.
    ExactlyUnbiased,
}

impl MatrixRow {
    pub fn interpretation(self) -> &'static str {
        match self {
            Self::NearZeroBias => "Near-zero bias and stable variance",
            Self::MildBias => "Mild bias, within acceptable error margin",
            Self::ModerateBias => "Moderate bias; may be tolerable depending on the research",
            Self::MeaningfulBias => "Meaningful bias",
            Self::ExactlyUnbiased => "Exactly unbiased (zero RMSE)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictFlag {
    /// 1 < V ≤ 1 + tolerance: accepted, but above-unit variance is rare.
    AboveUnitVariance,
    VarianceBelowFloor,
    VarianceAboveCeiling,
}

/// Decision-matrix thresholds. `|M|` boundaries go to the less severe
/// category: `|M| = 0.10` is Accept, `0.20` Accept with caution, `0.30`
/// Research dependent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub accept: f64,
    pub caution: f64,
    pub research: f64,
    pub variance_floor: f64,
    pub variance_upper_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            accept: 0.10,
            caution: 0.20,
            research: 0.30,
            variance_floor: 0.90,
            variance_upper_tol: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtbaVerdict {
    pub verdict: Verdict,
    pub row: MatrixRow,
    pub m: f64,
    pub v: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<VerdictFlag>,
}

pub fn classify(m: f64, v: f64) -> BtbaVerdict {
    classify_with(m, v, &Thresholds::default())
}

/// Rules are checked in a fixed order, Reject first:
///
/// 1. Reject when `|M| > research`, `V < floor` or `V > 1 + upper_tol`;
/// 2. Research dependent when `|M| > caution`;
/// 3. Accept with caution when `|M| > accept`;
/// 4. Accept otherwise.
pub fn classify_with(m: f64, v: f64, t: &Thresholds) -> BtbaVerdict {
    let abs_m = m.abs();
    let ceiling = 1.0 + t.variance_upper_tol;
    let mut flags = Vec::new();
    if v < t.variance_floor {
        flags.push(VerdictFlag::VarianceBelowFloor);
    } else if v > ceiling {
        flags.push(VerdictFlag::VarianceAboveCeiling);
    } else if v > 1.0 {
        flags.push(VerdictFlag::AboveUnitVariance);
    }
    let (verdict, row) = if abs_m > t.research || v < t.variance_floor || v > ceiling || abs_m.is_nan() || v.is_nan() {
        (Verdict::Reject, MatrixRow::MeaningfulBias)
    } else if abs_m > t.caution {
        (Verdict::ResearchDependent, MatrixRow::ModerateBias)
    } else if abs_m > t.accept {
        (Verdict::AcceptWithCaution, MatrixRow::MildBias)
    } else {
        (Verdict::Accept, MatrixRow::NearZeroBias)
    };
    BtbaVerdict {
        verdict,
        row,
        m,
        v,
        flags,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SummaryOptions {
    pub variance_kind: VarianceKind,
    pub thresholds: Thresholds,
    pub zero_guard: Option<f64>,
}

/// Everything the diagnostics say about one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub condition_id: String,
    pub parameter_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionKey>,
    pub truth: f64,
    /// Number of converged replications (R).
    pub replications: usize,
    #[serde(default)]
    pub excluded: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// `None` when the truth is inside the zero guard.
    pub rb: Option<f64>,
    pub arb_percent: Option<f64>,
    pub rmse: f64,
    pub zstar_mean: f64,
    pub zstar_var: f64,
    pub variance_kind: VarianceKind,
    pub verdict: BtbaVerdict,
    pub zstar: Vec<f64>,
    pub estimates: Vec<f64>,
}

impl BiasReport {
    /// Mean and variance of the raw estimates, using the report's variance kind.
    pub fn estimate_moments(&self) -> (f64, f64) {
        mean_and_variance(&self.estimates, self.variance_kind)
    }
}

pub fn summarize(sample: &EstimateSample) -> Result<BiasReport> {
    summarize_with(sample, &SummaryOptions::default())
}

pub fn summarize_with(sample: &EstimateSample, options: &SummaryOptions) -> Result<BiasReport> {
    let estimates = &sample.estimates;
    if estimates.len() < 2 {
        return Err(Error::Domain(format!(
            "condition {}: at least two converged estimates are needed, got {}",
            sample.condition_id,
            estimates.len()
        )));
    }
    let truth = sample.truth;
    let (mean_estimate, _) = mean_and_variance(estimates, VarianceKind::Population);
    let bias = mean_estimate - truth;
    let guard = options.zero_guard.unwrap_or(DEFAULT_ZERO_GUARD);
    let rb = match relative_bias_with_guard(mean_estimate, truth, guard) {
        Ok(rb) => Some(rb),
        Err(Error::NearZeroTruth { .. }) => None,
        Err(e) => return Err(e),
    };
    let scale = rmse(estimates, truth)?;

    let (zs, zstar_mean, zstar_var, verdict) = match zstar(estimates, truth) {
        Ok(zs) => {
            let (m, v) = mean_and_variance(&zs, options.variance_kind);
            let verdict = classify_with(m, v, &options.thresholds);
            (zs, m, v, verdict)
        }
        Err(Error::ZeroRmse) => {
            let verdict = BtbaVerdict {
                verdict: Verdict::Accept,
                row: MatrixRow::ExactlyUnbiased,
                m: 0.0,
                v: 0.0,
                flags: Vec::new(),
            };
            (vec![0.0; estimates.len()], 0.0, 0.0, verdict)
        }
        Err(e) => return Err(e),
    };

    Ok(BiasReport {
        schema_version: REPORT_SCHEMA_VERSION,
        condition_id: sample.condition_id.clone(),
        parameter_label: sample.parameter_label.clone(),
        condition: None,
        truth,
        replications: estimates.len(),
        excluded: 0,
        mean_estimate,
        bias,
        rb,
        arb_percent: rb.map(arb_percent),
        rmse: scale,
        zstar_mean,
        zstar_var,
        variance_kind: options.variance_kind,
        verdict,
        zstar: zs,
        estimates: estimates.clone(),
    })
}

//! Full-information maximum-likelihood estimation of the growth model.

mod likelihood;
mod optimizer;
mod params;

pub use likelihood::{
    finite_difference_gradient, loglik_at, loglik_gradient, pattern_loglik, PatternStats,
    PatternSummary,
};
pub use optimizer::OptimizerSettings;
pub use params::{ParamLayout, ParamVector};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelShape, PopulationParams, CONSTRUCTS};

/// Variances below this are treated as a boundary (improper) solution.
pub const BOUNDARY_VARIANCE: f64 = 1e-6;

/// Why a fit is not usable as a converged replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    NotConverged,
    BoundaryVariance,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub params: ParamVector,
    pub target_estimate: f64,
    pub loglik: f64,
    pub converged: bool,
    pub status: FitStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub pattern_count: usize,
    /// Log-likelihood at the start and after each accepted step.
    pub loglik_trace: Vec<f64>,
}

impl EstimationResult {
    pub fn natural(&self) -> PopulationParams {
        self.params.to_natural()
    }
}

/// Maximizes the FIML log-likelihood from `start`.
///
/// Failing to converge is reported through `converged`, not as an error. An
/// error is returned only for an invalid start or when the likelihood is
/// undefined at the start.
pub fn fit(data: &Dataset, start: &ParamVector, settings: &OptimizerSettings) -> Result<EstimationResult> {
    if data.n_cols() != start.shape().n_observed() {
        return Err(Error::Start(format!(
            "start is for {} variables but the data has {}",
            start.shape().n_observed(),
            data.n_cols()
        )));
    }
    if data.n_rows() == 0 {
        return Err(Error::Domain("cannot fit an empty dataset".into()));
    }
    let summary = PatternSummary::from_dataset(data)?;
    // Surface a likelihood failure at the start as the underlying error.
    likelihood::loglik_and_gradient(&summary, start)?;

    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = start.with_values(x);
        if settings.finite_difference_gradient {
            let v = loglik_at(&summary, &p).ok()?;
            let g = finite_difference_gradient(&summary, &p, settings.fd_step).ok()?;
            Some((-v, g.into_iter().map(|gi| -gi).collect()))
        } else {
            let (v, g) = likelihood::loglik_and_gradient(&summary, &p).ok()?;
            Some((-v, g.into_iter().map(|gi| -gi).collect()))
        }
    };
    let min = optimizer::minimize(objective, start.as_slice().to_vec(), settings)
        .ok_or_else(|| Error::Start("objective undefined at the start".into()))?;

    let params = start.with_values(&min.x);
    let target_estimate = params.extract_target()?;
    let gradient_norm = min.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let status = if !min.converged {
        FitStatus::NotConverged
    } else if params.min_variance() < BOUNDARY_VARIANCE {
        FitStatus::BoundaryVariance
    } else {
        FitStatus::Converged
    };

    Ok(EstimationResult {
        params,
        target_estimate,
        loglik: -min.value,
        converged: status == FitStatus::Converged,
        status,
        iterations: min.iterations,
        gradient_norm,
        pattern_count: summary.patterns().len(),
        loglik_trace: min.trace.iter().map(|v| -v).collect(),
    })
}

/// Slope-slope correlation of a parameter point.
pub fn extract_target(params: &ParamVector) -> Result<f64> {
    params.extract_target()
}

/// Deterministic starting values computed from the observed data.
///
/// Growth means come from a least-squares line through each construct's
/// per-wave composite means; Ψ starts at 0.5·I; free loadings at 1 and free
/// intercepts at the average offset of each indicator from the wave's
/// marker. Residual variances start at half of each indicator's observed
/// variance and disturbance variances at a quarter of the marker's.
pub fn default_start(data: &Dataset, shape: &ModelShape) -> Result<ParamVector> {
    if data.n_cols() != shape.n_observed() {
        return Err(Error::Start(format!(
            "data has {} columns, model expects {}",
            data.n_cols(),
            shape.n_observed()
        )));
    }
    let p = shape.n_observed();
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    let mut count = vec![0usize; p];
    for i in 0..data.n_rows() {
        for j in 0..p {
            if let Some(v) = data.value(i, j) {
                sum[j] += v;
                sum_sq[j] += v * v;
                count[j] += 1;
            }
        }
    }
    let mean: Vec<f64> = (0..p)
        .map(|j| if count[j] > 0 { sum[j] / count[j] as f64 } else { 0.0 })
        .collect();
    let var: Vec<f64> = (0..p)
        .map(|j| {
            if count[j] > 1 {
                let n = count[j] as f64;
                (sum_sq[j] - n * mean[j] * mean[j]) / (n - 1.0)
            } else {
                f64::NAN
            }
        })
        .map(|v| if v.is_finite() && v > 1e-8 { v } else { 1.0 })
        .collect();

    let k = shape.indicators_per_wave();
    let times = shape.time_scores();
    let mut params = PopulationParams::zeros(shape);
    let mut growth_means = Vector4::zeros();
    for c in 0..CONSTRUCTS {
        let composite: Vec<f64> = (0..shape.waves())
            .map(|w| (0..k).map(|i| mean[shape.observed_index(c, w, i)]).sum::<f64>() / k as f64)
            .collect();
        let (intercept, slope) = least_squares_line(times, &composite);
        growth_means[2 * c] = intercept;
        growth_means[2 * c + 1] = slope;
        for i in 1..k {
            params.loadings[c][i] = 1.0;
            params.measurement_intercepts[c][i] = (0..shape.waves())
                .map(|w| mean[shape.observed_index(c, w, i)] - mean[shape.observed_index(c, w, 0)])
                .sum::<f64>()
                / shape.waves() as f64;
        }
        if shape.has_disturbances() {
            for w in 0..shape.waves() {
                params.disturbance_vars[shape.first_order_index(c, w)] =
                    0.25 * var[shape.observed_index(c, w, 0)];
            }
        }
    }
    params.growth_means = growth_means;
    params.growth_cov = nalgebra::Matrix4::identity() * 0.5;
    if shape.has_residuals() {
        params.residual_vars = var.iter().map(|v| 0.5 * v).collect();
    }
    ParamVector::from_natural(&params, shape)
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_mvn, SeedPlan};
    use crate::model::{implied_moments, set_slope_correlation};

    #[test]
    fn least_squares_line_recovers_exact_line() {
        let (a, b) = least_squares_line(&[0.0, 1.0, 2.0, 3.0], &[1.0, 1.5, 2.0, 2.5]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn start_is_feasible_for_default_data() {
        let shape = ModelShape::standard();
        let p = set_slope_correlation(&PopulationParams::illustrative(&shape), 0.3).unwrap();
        let m = implied_moments(&p, &shape).unwrap();
        let data = sample_mvn(&m, 120, SeedPlan::new(5, 0, 0)).unwrap();
        let start = default_start(&data, &shape).unwrap();
        let natural = start.to_natural();
        assert!((natural.growth_means[1] - 0.5).abs() < 0.3);
        assert_eq!(natural.loadings[0], vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn mismatched_start_is_rejected() {
        let shape = ModelShape::standard();
        let data = Dataset::complete(2, vec![0.0, 1.0]).unwrap();
        let p = PopulationParams::illustrative(&shape);
        let start = ParamVector::from_natural(&p, &shape).unwrap();
        assert!(matches!(
            fit(&data, &start, &OptimizerSettings::default()),
            Err(Error::Start(_))
        ));
    }
}

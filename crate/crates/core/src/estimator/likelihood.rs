//! Full-information multivariate-normal likelihood over missing-data patterns.
//!
//! Rows sharing a mask form one pattern. Each pattern is reduced to its case
//! count, mean and (divide-by-n) scatter matrix over the observed variables,
//! so that
//!
//! ```text
//! loglik_p = -n_p/2 · [k log 2π + log|Σ_o| + tr(Σ_o⁻¹ (S_p + d dᵀ))],   d = ȳ_p − μ_o
//! ```
//!
//! which is the sum of the casewise log-densities of the pattern. Rows are
//! accumulated in a canonical (sorted) order, which makes the statistics and
//! therefore the likelihood independent of row order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelMatrices, MomentStructure, CONSTRUCTS, GROWTH_FACTORS};

use super::params::{chol_index, ParamVector};

const MIN_RCOND: f64 = 1e-14;

/// Sufficient statistics of one missing-data pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternStats {
    pub observed: Vec<usize>,
    pub count: usize,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

/// All patterns of a dataset, ordered by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSummary {
    n_cols: usize,
    n_rows: usize,
    patterns: Vec<PatternStats>,
}

fn row_order(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl PatternSummary {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
        for i in 0..data.n_rows() {
            let mask = data.mask_row(i);
            if !mask.iter().any(|&m| m) {
                return Err(Error::Domain(format!("row {i} has no observed cells")));
            }
            groups.entry(mask.to_vec()).or_default().push(i);
        }
        // Reverse key order puts the fully observed pattern first.
        let patterns = groups
            .into_iter()
            .rev()
            .map(|(mask, rows)| {
                let observed: Vec<usize> =
                    mask.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j).collect();
                let mut cases: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&i| observed.iter().map(|&j| data.row(i)[j]).collect())
                    .collect();
                cases.sort_by(|a, b| row_order(a, b));
                pattern_stats(observed, &cases)
            })
            .collect();
        Ok(Self {
            n_cols: data.n_cols(),
            n_rows: data.n_rows(),
            patterns,
        })
    }

    pub fn patterns(&self) -> &[PatternStats] {
        &self.patterns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn loglik(&self, moments: &MomentStructure) -> Result<f64> {
        self.evaluate(moments, false).map(|e| e.loglik)
    }

    /// Log-likelihood with its derivatives with respect to the full mean
    /// vector and covariance matrix, `dℓ = gᵀ dμ + tr(G dΣ)`.
    pub(crate) fn evaluate(&self, moments: &MomentStructure, derivs: bool) -> Result<MomentDerivs> {
        if moments.dim() != self.n_cols {
            return Err(Error::Domain(format!(
                "moment dimension {} does not match {} data columns",
                moments.dim(),
                self.n_cols
            )));
        }
        let p = self.n_cols;
        let mut out = MomentDerivs {
            loglik: 0.0,
            d_mean: DVector::zeros(if derivs { p } else { 0 }),
            d_cov: DMatrix::zeros(if derivs { p } else { 0 }, if derivs { p } else { 0 }),
        };
        for pat in &self.patterns {
            let k = pat.observed.len();
            let obs = &pat.observed;
            let sigma = DMatrix::from_fn(k, k, |a, b| moments.cov[(obs[a], obs[b])]);
            let chol = sigma.cholesky().ok_or_else(|| Error::SingularCov {
                observed: obs.clone(),
                rcond: 0.0,
            })?;
            let l = chol.l_dirty();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            let mut logdet = 0.0;
            for a in 0..k {
                let d = l[(a, a)];
                lo = lo.min(d);
                hi = hi.max(d);
                logdet += 2.0 * d.ln();
            }
            let rcond = (lo / hi).powi(2);
            if !(rcond >= MIN_RCOND) {
                return Err(Error::SingularCov {
                    observed: obs.clone(),
                    rcond,
                });
            }
            let inv = chol.inverse();
            let d = DVector::from_fn(k, |a, _| pat.mean[a] - moments.mean[obs[a]]);
            let mut w = pat.scatter.clone();
            w.ger(1.0, &d, &d, 1.0);
            let trace: f64 = inv.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
            let n = pat.count as f64;
            out.loglik += -0.5 * n * (k as f64 * (2.0 * PI).ln() + logdet + trace);

            if derivs {
                let g_mean = &inv * &d * n;
                let iwi = &inv * &w * &inv;
                for a in 0..k {
                    out.d_mean[obs[a]] += g_mean[a];
                    for b in 0..k {
                        out.d_cov[(obs[a], obs[b])] += -0.5 * n * (inv[(a, b)] - iwi[(a, b)]);
                    }
                }
            }
        }
        Ok(out)
    }
}

pub(crate) struct MomentDerivs {
    pub loglik: f64,
    pub d_mean: DVector<f64>,
    pub d_cov: DMatrix<f64>,
}

fn pattern_stats(observed: Vec<usize>, cases: &[Vec<f64>]) -> PatternStats {
    let k = observed.len();
    let n = cases.len() as f64;
    let mut mean = DVector::zeros(k);
    for row in cases {
        for (a, v) in row.iter().enumerate() {
            mean[a] += v;
        }
    }
    mean /= n;
    let mut scatter = DMatrix::zeros(k, k);
    let mut dev = DVector::zeros(k);
    for row in cases {
        for a in 0..k {
            dev[a] = row[a] - mean[a];
        }
        scatter.ger(1.0, &dev, &dev, 1.0);
    }
    scatter /= n;
    PatternStats {
        observed,
        count: cases.len(),
        mean,
        scatter,
    }
}

/// FIML log-likelihood of `data` under `moments`.
pub fn pattern_loglik(data: &Dataset, moments: &MomentStructure) -> Result<f64> {
    PatternSummary::from_dataset(data)?.loglik(moments)
}

/// Log-likelihood and its gradient with respect to the unconstrained
/// parameters, by the chain rule through the moment structure.
pub(crate) fn loglik_and_gradient(
    summary: &PatternSummary,
    params: &ParamVector,
) -> Result<(f64, Vec<f64>)> {
    let natural = params.to_natural();
    let shape = params.shape();
    let mats = ModelMatrices::new(&natural, shape);
    let moments = mats.moments();
    let md = summary.evaluate(&moments, true)?;
    let lay = params.layout();
    let mut grad = vec![0.0; lay.len];

    let g = &md.d_mean;
    let big_g = &md.d_cov;
    let lambda1 = &mats.lambda1;

    // Growth means: μ = τ + Λ₁ Λ₂ α.
    let d_factor_mean = lambda1.transpose() * g;
    let d_alpha = mats.lambda2.transpose() * &d_factor_mean;
    grad[lay.means..lay.means + GROWTH_FACTORS].copy_from_slice(d_alpha.as_slice());

    // Σ = Λ₁ Φ Λ₁ᵀ + Θ, Φ = Λ₂ Ψ Λ₂ᵀ + D.
    let g_lambda1 = big_g * lambda1;
    let d_phi = lambda1.transpose() * &g_lambda1;
    let d_psi = mats.lambda2.transpose() * &d_phi * &mats.lambda2;

    // Ψ = L Lᵀ  ⇒  ∂ℓ/∂L = 2 (∂ℓ/∂Ψ) L.
    let l = params.psi_factor();
    for i in 0..GROWTH_FACTORS {
        for j in 0..=i {
            let mut v = 0.0;
            for m in 0..GROWTH_FACTORS {
                v += 2.0 * d_psi[(i, m)] * l[(m, j)];
            }
            if i == j {
                v *= l[(i, i)];
            }
            grad[lay.chol + chol_index(i, j)] = v;
        }
    }

    for k in 0..lay.n_disturbances {
        grad[lay.disturbances + k] = d_phi[(k, k)] * natural.disturbance_vars[k];
    }

    // ∂ℓ/∂Λ₁ = 2 G Λ₁ Φ + g ηᵀ, summed over waves for the shared loadings.
    let f = lay.free_per_construct;
    if f > 0 {
        let d_lambda1 = &g_lambda1 * &mats.phi * 2.0;
        for c in 0..CONSTRUCTS {
            for i in 0..f {
                let mut dl = 0.0;
                let mut dt = 0.0;
                for w in 0..shape.waves() {
                    let row = shape.observed_index(c, w, i + 1);
                    let col = shape.first_order_index(c, w);
                    dl += d_lambda1[(row, col)] + g[row] * mats.factor_mean[col];
                    dt += g[row];
                }
                grad[lay.loadings + c * f + i] = dl;
                grad[lay.intercepts + c * f + i] = dt;
            }
        }
    }

    for k in 0..lay.n_residuals {
        grad[lay.residuals + k] = big_g[(k, k)] * natural.residual_vars[k];
    }

    Ok((md.loglik, grad))
}

/// Gradient of the FIML log-likelihood with respect to the unconstrained
/// parameters.
pub fn loglik_gradient(data: &Dataset, params: &ParamVector) -> Result<Vec<f64>> {
    let summary = PatternSummary::from_dataset(data)?;
    loglik_and_gradient(&summary, params).map(|(_, g)| g)
}

/// FIML log-likelihood at an unconstrained parameter point.
pub fn loglik_at(summary: &PatternSummary, params: &ParamVector) -> Result<f64> {
    let moments = ModelMatrices::new(&params.to_natural(), params.shape()).moments();
    summary.loglik(&moments)
}

/// Central finite-difference gradient of [`loglik_at`].
pub fn finite_difference_gradient(
    summary: &PatternSummary,
    params: &ParamVector,
    step: f64,
) -> Result<Vec<f64>> {
    let base = params.as_slice().to_vec();
    let mut grad = vec![0.0; base.len()];
    let mut x = base.clone();
    for k in 0..base.len() {
        x[k] = base[k] + step;
        let up = loglik_at(summary, &params.with_values(&x))?;
        x[k] = base[k] - step;
        let down = loglik_at(summary, &params.with_values(&x))?;
        x[k] = base[k];
        grad[k] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

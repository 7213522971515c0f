//! Unconstrained parameterization of the growth model.
//!
//! Layout, in order:
//!
//! | block                    | length                 | transform                    |
//! |--------------------------|------------------------|------------------------------|
//! | growth means             | 4                      | identity                     |
//! | Cholesky factor of Ψ     | 10 (row-major lower)   | log on the diagonal          |
//! | disturbance variances    | 2·waves (if present)   | log                          |
//! | free loadings            | 2·(indicators − 1)     | identity                     |
//! | free intercepts          | 2·(indicators − 1)     | identity                     |
//! | residual variances       | 2·waves·indicators (if present) | log                 |
//!
//! The marker indicator of each construct keeps loading 1 and intercept 0.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::model::{slope_correlation, ModelShape, PopulationParams, CONSTRUCTS, GROWTH_FACTORS};

pub(crate) const CHOL_LEN: usize = GROWTH_FACTORS * (GROWTH_FACTORS + 1) / 2;

/// Offsets of each block inside the unconstrained vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub means: usize,
    pub chol: usize,
    pub disturbances: usize,
    pub n_disturbances: usize,
    pub loadings: usize,
    pub intercepts: usize,
    /// Free loadings (and free intercepts) per construct.
    pub free_per_construct: usize,
    pub residuals: usize,
    pub n_residuals: usize,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(shape: &ModelShape) -> Self {
        let means = 0;
        let chol = means + GROWTH_FACTORS;
        let disturbances = chol + CHOL_LEN;
        let n_disturbances = if shape.has_disturbances() {
            shape.n_first_order()
        } else {
            0
        };
        let free_per_construct = shape.indicators_per_wave() - 1;
        let loadings = disturbances + n_disturbances;
        let intercepts = loadings + CONSTRUCTS * free_per_construct;
        let residuals = intercepts + CONSTRUCTS * free_per_construct;
        let n_residuals = if shape.has_residuals() {
            shape.n_observed()
        } else {
            0
        };
        Self {
            means,
            chol,
            disturbances,
            n_disturbances,
            loadings,
            intercepts,
            free_per_construct,
            residuals,
            n_residuals,
            len: residuals + n_residuals,
        }
    }

    /// Indices of entries that are logarithms of variances (Cholesky
    /// diagonal excluded).
    pub fn log_variance_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (self.disturbances..self.disturbances + self.n_disturbances)
            .chain(self.residuals..self.residuals + self.n_residuals)
    }
}

/// Index of lower-triangular entry `(i, j)`, `j <= i`, in row-major order.
pub(crate) fn chol_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Free parameters in unconstrained space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    shape: ModelShape,
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_values(shape: &ModelShape, values: Vec<f64>) -> Result<Self> {
        let layout = ParamLayout::new(shape);
        if values.len() != layout.len {
            return Err(Error::Start(format!(
                "expected {} free parameters, got {}",
                layout.len,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Start("free parameters must be finite".into()));
        }
        Ok(Self {
            shape: shape.clone(),
            layout,
            values,
        })
    }

    /// Maps natural parameters into unconstrained space. Requires a
    /// positive-definite growth covariance and strictly positive estimated
    /// variances.
    pub fn from_natural(params: &PopulationParams, shape: &ModelShape) -> Result<Self> {
        params
            .validate(shape)
            .map_err(|e| Error::Start(e.to_string()))?;
        let layout = ParamLayout::new(shape);
        let mut values = vec![0.0; layout.len];

        values[layout.means..layout.means + 4].copy_from_slice(params.growth_means.as_slice());

        let chol = params
            .growth_cov
            .cholesky()
            .ok_or_else(|| Error::Start("growth covariance is not positive definite".into()))?
            .l();
        for i in 0..GROWTH_FACTORS {
            for j in 0..=i {
                let v = chol[(i, j)];
                values[layout.chol + chol_index(i, j)] = if i == j { v.ln() } else { v };
            }
        }

        let log_positive = |v: f64, what: &str| -> Result<f64> {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(Error::Start(format!("{what} must be strictly positive, got {v}")))
            }
        };
        for k in 0..layout.n_disturbances {
            values[layout.disturbances + k] =
                log_positive(params.disturbance_vars[k], "disturbance variance")?;
        }
        let f = layout.free_per_construct;
        for c in 0..CONSTRUCTS {
            for i in 0..f {
                values[layout.loadings + c * f + i] = params.loadings[c][i + 1];
                values[layout.intercepts + c * f + i] = params.measurement_intercepts[c][i + 1];
            }
        }
        for k in 0..layout.n_residuals {
            values[layout.residuals + k] = log_positive(params.residual_vars[k], "residual variance")?;
        }
        Self::from_values(shape, values)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn with_values(&self, values: &[f64]) -> Self {
        Self {
            shape: self.shape.clone(),
            layout: self.layout,
            values: values.to_vec(),
        }
    }

    /// Lower Cholesky factor of Ψ.
    pub fn psi_factor(&self) -> Matrix4<f64> {
        let mut l = Matrix4::zeros();
        for i in 0..GROWTH_FACTORS {
            for j in 0..=i {
                let v = self.values[self.layout.chol + chol_index(i, j)];
                l[(i, j)] = if i == j { v.exp() } else { v };
            }
        }
        l
    }

    pub fn to_natural(&self) -> PopulationParams {
        let lay = &self.layout;
        let shape = &self.shape;
        let l = self.psi_factor();
        let psi = l * l.transpose();
        let growth_cov = (psi + psi.transpose()) * 0.5;
        let growth_means = Vector4::from_column_slice(&self.values[lay.means..lay.means + 4]);

        let disturbance_vars = if lay.n_disturbances > 0 {
            self.values[lay.disturbances..lay.disturbances + lay.n_disturbances]
                .iter()
                .map(|v| v.exp())
                .collect()
        } else {
            vec![0.0; shape.n_first_order()]
        };
        let residual_vars = if lay.n_residuals > 0 {
            self.values[lay.residuals..lay.residuals + lay.n_residuals]
                .iter()
                .map(|v| v.exp())
                .collect()
        } else {
            vec![0.0; shape.n_observed()]
        };
        let f = lay.free_per_construct;
        let per_construct = |offset: usize, marker: f64| -> [Vec<f64>; CONSTRUCTS] {
            std::array::from_fn(|c| {
                std::iter::once(marker)
                    .chain(self.values[offset + c * f..offset + (c + 1) * f].iter().copied())
                    .collect()
            })
        };

        PopulationParams {
            growth_means,
            growth_cov,
            disturbance_vars,
            loadings: per_construct(lay.loadings, 1.0),
            measurement_intercepts: per_construct(lay.intercepts, 0.0),
            residual_vars,
        }
    }

    /// Slope-slope correlation implied by the Cholesky factor.
    pub fn extract_target(&self) -> Result<f64> {
        let l = self.psi_factor();
        slope_correlation(&(l * l.transpose()))
    }

    /// Smallest natural-scale variance among the growth variances and the
    /// estimated disturbance and residual variances.
    pub fn min_variance(&self) -> f64 {
        let l = self.psi_factor();
        let psi = l * l.transpose();
        let growth = (0..GROWTH_FACTORS).map(|i| psi[(i, i)]);
        let logged = self
            .layout
            .log_variance_indices()
            .map(|k| self.values[k].exp());
        growth.chain(logged).fold(f64::INFINITY, f64::min)
    }
}

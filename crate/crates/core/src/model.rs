//! Bivariate second-order latent growth model.
//!
//! Two constructs (B and H) are each measured at every wave by a block of
//! indicators. Indicators load on a wave-specific first-order factor, and the
//! first-order factors are in turn explained by an intercept and a slope
//! growth factor per construct. Growth factors are ordered
//! `(I_B, S_B, I_H, S_H)`.
//!
//! Observed variables are ordered construct-major, wave-major,
//! indicator-minor: `B:w1:i1, B:w1:i2, ..., B:w5:i3, H:w1:i1, ..., H:w5:i3`.
//! First-order factors follow the same construct-major, wave-minor order.

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};

use crate::error::{Error, Result};

pub const CONSTRUCTS: usize = 2;
pub const CONSTRUCT_LABELS: [&str; CONSTRUCTS] = ["B", "H"];
pub const GROWTH_FACTORS: usize = 4;

pub const INTERCEPT_B: usize = 0;
pub const SLOPE_B: usize = 1;
pub const INTERCEPT_H: usize = 2;
pub const SLOPE_H: usize = 3;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;

/// Wave and indicator structure shared by both constructs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    time_scores: Vec<f64>,
    indicators_per_wave: usize,
    wave_disturbances: bool,
}

impl ModelShape {
    pub fn new(
        time_scores: Vec<f64>,
        indicators_per_wave: usize,
        wave_disturbances: bool,
    ) -> Result<Self> {
        if time_scores.len() < 2 {
            return Err(Error::Domain(format!(
                "at least two waves are required, got {}",
                time_scores.len()
            )));
        }
        if time_scores.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("time scores must be finite".into()));
        }
        if time_scores.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "time scores must be strictly increasing: {time_scores:?}"
            )));
        }
        if indicators_per_wave == 0 {
            return Err(Error::Domain("indicators_per_wave must be at least 1".into()));
        }
        Ok(Self {
            time_scores,
            indicators_per_wave,
            wave_disturbances,
        })
    }

    /// Five equally spaced waves coded 0..4, three indicators per wave.
    pub fn standard() -> Self {
        Self {
            time_scores: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            indicators_per_wave: 3,
            wave_disturbances: true,
        }
    }

    /// One indicator per wave with unit loading, zero intercept and no
    /// measurement residual. With `wave_disturbances = false` and two waves
    /// the model is saturated.
    pub fn single_indicator(time_scores: Vec<f64>, wave_disturbances: bool) -> Result<Self> {
        Self::new(time_scores, 1, wave_disturbances)
    }

    pub fn waves(&self) -> usize {
        self.time_scores.len()
    }

    pub fn time_scores(&self) -> &[f64] {
        &self.time_scores
    }

    pub fn indicators_per_wave(&self) -> usize {
        self.indicators_per_wave
    }

    pub fn has_disturbances(&self) -> bool {
        self.wave_disturbances
    }

    /// Measurement residuals exist only when a wave has more than one indicator.
    pub fn has_residuals(&self) -> bool {
        self.indicators_per_wave > 1
    }

    pub fn n_observed(&self) -> usize {
        CONSTRUCTS * self.waves() * self.indicators_per_wave
    }

    pub fn n_first_order(&self) -> usize {
        CONSTRUCTS * self.waves()
    }

    pub fn observed_index(&self, construct: usize, wave: usize, indicator: usize) -> usize {
        (construct * self.waves() + wave) * self.indicators_per_wave + indicator
    }

    pub fn first_order_index(&self, construct: usize, wave: usize) -> usize {
        construct * self.waves() + wave
    }

    /// Observed-variable indices belonging to one wave (both constructs).
    pub fn wave_variables(&self, wave: usize) -> Vec<usize> {
        (0..CONSTRUCTS)
            .flat_map(|c| {
                (0..self.indicators_per_wave).map(move |i| (c, i))
            })
            .map(|(c, i)| self.observed_index(c, wave, i))
            .collect()
    }

    pub fn variable_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n_observed());
        for c in CONSTRUCT_LABELS {
            for w in 0..self.waves() {
                for i in 0..self.indicators_per_wave {
                    labels.push(format!("{c}:w{}:i{}", w + 1, i + 1));
                }
            }
        }
        labels
    }
}

impl Default for ModelShape {
    fn default() -> Self {
        Self::standard()
    }
}

/// Full parameterization of the growth model in its natural metric.
///
/// `disturbance_vars` is indexed like the first-order factors and
/// `residual_vars` like the observed variables. In single-indicator mode the
/// loadings are `[1]`, intercepts `[0]` and residual variances zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationParams {
    pub growth_means: Vector4<f64>,
    pub growth_cov: Matrix4<f64>,
    pub disturbance_vars: Vec<f64>,
    pub loadings: [Vec<f64>; CONSTRUCTS],
    pub measurement_intercepts: [Vec<f64>; CONSTRUCTS],
    pub residual_vars: Vec<f64>,
}

impl PopulationParams {
    /// Illustrative defaults for the standard shape. The slope correlation is
    /// set separately via [`set_slope_correlation`].
    ///
    /// growth means (0, 0.5, 0, 0.5); intercept variances 1; slope variances
    /// 0.25; intercept-slope covariances 0; cross-construct intercept
    /// correlation 0.3; loadings (1, 0.9, 0.8); intercepts (0, 0.1, -0.1);
    /// disturbance variances 0.25; residual variances 0.36.
    pub fn illustrative(shape: &ModelShape) -> Self {
        let mut growth_cov = Matrix4::zeros();
        growth_cov[(INTERCEPT_B, INTERCEPT_B)] = 1.0;
        growth_cov[(INTERCEPT_H, INTERCEPT_H)] = 1.0;
        growth_cov[(SLOPE_B, SLOPE_B)] = 0.25;
        growth_cov[(SLOPE_H, SLOPE_H)] = 0.25;
        growth_cov[(INTERCEPT_B, INTERCEPT_H)] = 0.3;
        growth_cov[(INTERCEPT_H, INTERCEPT_B)] = 0.3;

        let k = shape.indicators_per_wave();
        let default_loadings = [1.0, 0.9, 0.8];
        let default_intercepts = [0.0, 0.1, -0.1];
        let loading: Vec<f64> = (0..k)
            .map(|i| default_loadings.get(i).copied().unwrap_or(0.8))
            .collect();
        let intercept: Vec<f64> = (0..k)
            .map(|i| default_intercepts.get(i).copied().unwrap_or(0.0))
            .collect();
        let residual = if shape.has_residuals() { 0.36 } else { 0.0 };
        let disturbance = if shape.has_disturbances() { 0.25 } else { 0.0 };

        Self {
            growth_means: Vector4::new(0.0, 0.5, 0.0, 0.5),
            growth_cov,
            disturbance_vars: vec![disturbance; shape.n_first_order()],
            loadings: [loading.clone(), loading],
            measurement_intercepts: [intercept.clone(), intercept],
            residual_vars: vec![residual; shape.n_observed()],
        }
    }

    /// Marker loadings of 1; every other entry zero.
    pub fn zeros(shape: &ModelShape) -> Self {
        let mut loading = vec![0.0; shape.indicators_per_wave()];
        loading[0] = 1.0;
        Self {
            growth_means: Vector4::zeros(),
            growth_cov: Matrix4::zeros(),
            disturbance_vars: vec![0.0; shape.n_first_order()],
            loadings: [loading.clone(), loading],
            measurement_intercepts: [
                vec![0.0; shape.indicators_per_wave()],
                vec![0.0; shape.indicators_per_wave()],
            ],
            residual_vars: vec![0.0; shape.n_observed()],
        }
    }

    pub fn slope_correlation(&self) -> Result<f64> {
        slope_correlation(&self.growth_cov)
    }

    pub fn validate(&self, shape: &ModelShape) -> Result<()> {
        let k = shape.indicators_per_wave();
        if self.disturbance_vars.len() != shape.n_first_order() {
            return Err(Error::Domain(format!(
                "expected {} disturbance variances, got {}",
                shape.n_first_order(),
                self.disturbance_vars.len()
            )));
        }
        if self.residual_vars.len() != shape.n_observed() {
            return Err(Error::Domain(format!(
                "expected {} residual variances, got {}",
                shape.n_observed(),
                self.residual_vars.len()
            )));
        }
        for c in 0..CONSTRUCTS {
            if self.loadings[c].len() != k || self.measurement_intercepts[c].len() != k {
                return Err(Error::Domain(format!(
                    "construct {} needs {k} loadings and intercepts",
                    CONSTRUCT_LABELS[c]
                )));
            }
            if self.loadings[c][0] != 1.0 || self.measurement_intercepts[c][0] != 0.0 {
                return Err(Error::Domain(format!(
                    "construct {}: marker indicator must have loading 1 and intercept 0",
                    CONSTRUCT_LABELS[c]
                )));
            }
        }
        let all_values = self
            .growth_means
            .iter()
            .chain(self.growth_cov.iter())
            .chain(self.disturbance_vars.iter())
            .chain(self.loadings.iter().flatten())
            .chain(self.measurement_intercepts.iter().flatten())
            .chain(self.residual_vars.iter());
        if all_values.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        if self
            .disturbance_vars
            .iter()
            .chain(self.residual_vars.iter())
            .any(|&v| v < 0.0)
        {
            return Err(Error::Domain("variances must be nonnegative".into()));
        }
        if !shape.has_disturbances() && self.disturbance_vars.iter().any(|&v| v != 0.0) {
            return Err(Error::Domain(
                "shape has no wave disturbances but disturbance variances are nonzero".into(),
            ));
        }
        if !shape.has_residuals() && self.residual_vars.iter().any(|&v| v != 0.0) {
            return Err(Error::Domain(
                "single-indicator shape requires zero residual variances".into(),
            ));
        }
        check_symmetric_psd(
            &DMatrix::from_iterator(4, 4, self.growth_cov.iter().copied()),
            "growth covariance",
        )?;
        let r = self.slope_correlation_unchecked();
        if let Some(r) = r {
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&r) {
                return Err(Error::Covariance(format!(
                    "implied slope correlation {r} lies outside [-1, 1]"
                )));
            }
        }
        Ok(())
    }

    fn slope_correlation_unchecked(&self) -> Option<f64> {
        let denom = (self.growth_cov[(SLOPE_B, SLOPE_B)] * self.growth_cov[(SLOPE_H, SLOPE_H)]).sqrt();
        (denom > 0.0).then(|| self.growth_cov[(SLOPE_B, SLOPE_H)] / denom)
    }
}

/// Slope-slope correlation of a growth covariance matrix.
pub fn slope_correlation(growth_cov: &Matrix4<f64>) -> Result<f64> {
    let vb = growth_cov[(SLOPE_B, SLOPE_B)];
    let vh = growth_cov[(SLOPE_H, SLOPE_H)];
    let denom = (vb * vh).sqrt();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Domain(format!(
            "slope variances must be strictly positive (got {vb}, {vh})"
        )));
    }
    Ok((growth_cov[(SLOPE_B, SLOPE_H)] / denom).clamp(-1.0, 1.0))
}

/// Returns `params` with the slope-slope covariance rescaled to correlation `rho`.
pub fn set_slope_correlation(params: &PopulationParams, rho: f64) -> Result<PopulationParams> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} is outside [-1, 1]")));
    }
    let vb = params.growth_cov[(SLOPE_B, SLOPE_B)];
    let vh = params.growth_cov[(SLOPE_H, SLOPE_H)];
    if !(vb > 0.0 && vh > 0.0) {
        return Err(Error::Domain(format!(
            "slope variances must be strictly positive (got {vb}, {vh})"
        )));
    }
    let mut out = params.clone();
    let cov = rho * (vb * vh).sqrt();
    out.growth_cov[(SLOPE_B, SLOPE_H)] = cov;
    out.growth_cov[(SLOPE_H, SLOPE_B)] = cov;
    check_symmetric_psd(
        &DMatrix::from_iterator(4, 4, out.growth_cov.iter().copied()),
        "growth covariance",
    )?;
    Ok(out)
}

/// Model-implied mean vector and covariance matrix of the observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStructure {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MomentStructure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() {
            return Err(Error::Covariance(format!(
                "dimension mismatch: mean {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let m = Self { mean, cov };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_symmetric_psd(&self.cov, "implied covariance")
    }

    /// Applies a variable permutation: output variable `i` is input variable `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        let mean = DVector::from_fn(n, |i, _| self.mean[perm[i]]);
        let cov = DMatrix::from_fn(n, n, |i, j| self.cov[(perm[i], perm[j])]);
        Self { mean, cov }
    }
}

pub(crate) fn check_symmetric_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Covariance(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Covariance(format!("{what} has non-finite entries")));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if n > 0 && min < PSD_TOL {
        return Err(Error::Covariance(format!(
            "{what} is not positive semidefinite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Structural matrices of the model for one parameter value.
///
/// `lambda1` maps first-order factors to indicators (block diagonal in the
/// construct-wave blocks), `lambda2` maps growth factors to first-order
/// factors using `[1, time_score]` rows.
#[derive(Debug, Clone)]
pub(crate) struct ModelMatrices {
    pub lambda1: DMatrix<f64>,
    pub lambda2: DMatrix<f64>,
    /// Covariance of the first-order factors, `lambda2 * psi * lambda2' + D_zeta`.
    pub phi: DMatrix<f64>,
    /// Means of the first-order factors, `lambda2 * growth_means`.
    pub factor_mean: DVector<f64>,
    pub intercepts: DVector<f64>,
    pub residuals: DVector<f64>,
}

impl ModelMatrices {
    pub fn new(params: &PopulationParams, shape: &ModelShape) -> Self {
        let p = shape.n_observed();
        let m = shape.n_first_order();
        let k = shape.indicators_per_wave();

        let mut lambda1 = DMatrix::zeros(p, m);
        let mut intercepts = DVector::zeros(p);
        for c in 0..CONSTRUCTS {
            for w in 0..shape.waves() {
                let f = shape.first_order_index(c, w);
                for i in 0..k {
                    let j = shape.observed_index(c, w, i);
                    lambda1[(j, f)] = params.loadings[c][i];
                    intercepts[j] = params.measurement_intercepts[c][i];
                }
            }
        }

        let mut lambda2 = DMatrix::zeros(m, GROWTH_FACTORS);
        for c in 0..CONSTRUCTS {
            for (w, &t) in shape.time_scores().iter().enumerate() {
                let f = shape.first_order_index(c, w);
                lambda2[(f, 2 * c)] = 1.0;
                lambda2[(f, 2 * c + 1)] = t;
            }
        }

        let psi = DMatrix::from_iterator(4, 4, params.growth_cov.iter().copied());
        let mut phi = &lambda2 * &psi * lambda2.transpose();
        for (f, &d) in params.disturbance_vars.iter().enumerate() {
            phi[(f, f)] += d;
        }
        let alpha = DVector::from_iterator(4, params.growth_means.iter().copied());
        let factor_mean = &lambda2 * alpha;

        Self {
            lambda1,
            lambda2,
            phi,
            factor_mean,
            intercepts,
            residuals: DVector::from_vec(params.residual_vars.clone()),
        }
    }

    pub fn moments(&self) -> MomentStructure {
        let mean = &self.intercepts + &self.lambda1 * &self.factor_mean;
        let mut cov = &self.lambda1 * &self.phi * self.lambda1.transpose();
        for (j, &r) in self.residuals.iter().enumerate() {
            cov[(j, j)] += r;
        }
        cov = (&cov + cov.transpose()) * 0.5;
        MomentStructure { mean, cov }
    }
}

/// Model-implied moments of the observed indicators.
pub fn implied_moments(params: &PopulationParams, shape: &ModelShape) -> Result<MomentStructure> {
    params.validate(shape)?;
    let moments = ModelMatrices::new(params, shape).moments();
    moments.validate()?;
    Ok(moments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_single_indicator() -> (ModelShape, PopulationParams) {
        let shape = ModelShape::single_indicator(vec![0.0, 1.0, 2.0, 3.0, 4.0], false).unwrap();
        let mut params = PopulationParams::zeros(&shape);
        params.growth_cov = Matrix4::identity();
        (shape, params)
    }

    #[test]
    fn zero_correlation_zeroes_slope_covariance() {
        let shape = ModelShape::standard();
        let p = set_slope_correlation(&PopulationParams::illustrative(&shape), 0.0).unwrap();
        assert_eq!(p.growth_cov[(SLOPE_B, SLOPE_H)], 0.0);
        assert_eq!(p.growth_cov[(SLOPE_H, SLOPE_B)], 0.0);
    }

    #[test]
    fn unit_slope_variances_take_rho_directly() {
        let shape = ModelShape::standard();
        let mut p = PopulationParams::illustrative(&shape);
        p.growth_cov[(SLOPE_B, SLOPE_B)] = 1.0;
        p.growth_cov[(SLOPE_H, SLOPE_H)] = 1.0;
        let p = set_slope_correlation(&p, 0.55).unwrap();
        assert_eq!(p.growth_cov[(SLOPE_B, SLOPE_H)], 0.55);
    }

    #[test]
    fn unequal_slope_variances_scale_covariance() {
        let shape = ModelShape::standard();
        let mut p = PopulationParams::illustrative(&shape);
        p.growth_cov[(SLOPE_B, SLOPE_B)] = 0.25;
        p.growth_cov[(SLOPE_H, SLOPE_H)] = 0.16;
        let out = set_slope_correlation(&p, 0.3).unwrap();
        assert_abs_diff_eq!(out.growth_cov[(SLOPE_B, SLOPE_H)], 0.06, epsilon = 1e-15);
        for i in 0..4 {
            for j in 0..4 {
                if !matches!((i, j), (SLOPE_B, SLOPE_H) | (SLOPE_H, SLOPE_B)) {
                    assert_eq!(out.growth_cov[(i, j)], p.growth_cov[(i, j)]);
                }
            }
        }
        assert_eq!(out.residual_vars, p.residual_vars);
    }

    #[test]
    fn rho_outside_unit_interval_is_rejected() {
        let shape = ModelShape::standard();
        let p = PopulationParams::illustrative(&shape);
        assert!(matches!(set_slope_correlation(&p, 1.2), Err(Error::Domain(_))));
        assert!(matches!(set_slope_correlation(&p, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn non_psd_result_is_a_covariance_error() {
        // Intercepts strongly tied to both slopes with opposite signs leave no
        // room for a perfect positive slope correlation.
        let shape = ModelShape::standard();
        let mut p = PopulationParams::illustrative(&shape);
        p.growth_cov[(INTERCEPT_B, SLOPE_B)] = 0.45;
        p.growth_cov[(SLOPE_B, INTERCEPT_B)] = 0.45;
        p.growth_cov[(INTERCEPT_B, SLOPE_H)] = -0.45;
        p.growth_cov[(SLOPE_H, INTERCEPT_B)] = -0.45;
        assert!(matches!(set_slope_correlation(&p, 1.0), Err(Error::Covariance(_))));
    }

    #[test]
    fn identity_psi_gives_one_plus_st_blocks() {
        let (shape, params) = identity_single_indicator();
        let m = implied_moments(&params, &shape).unwrap();
        assert_eq!(m.dim(), 10);
        for c in 0..2 {
            for s in 0..5 {
                for t in 0..5 {
                    let i = shape.observed_index(c, s, 0);
                    let j = shape.observed_index(c, t, 0);
                    assert_abs_diff_eq!(m.cov[(i, j)], 1.0 + (s * t) as f64, epsilon = 1e-12);
                    let j_other = shape.observed_index(1 - c, t, 0);
                    assert_eq!(m.cov[(i, j_other)], 0.0);
                }
            }
        }
        assert!(m.mean.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_zero_model() {
        let shape = ModelShape::standard();
        let params = PopulationParams::zeros(&shape);
        let m = implied_moments(&params, &shape).unwrap();
        assert!(m.mean.iter().all(|&v| v == 0.0));
        assert!(m.cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_config_round_trips_slope_correlation() {
        let shape = ModelShape::standard();
        let p = set_slope_correlation(&PopulationParams::illustrative(&shape), 0.1).unwrap();
        implied_moments(&p, &shape).unwrap();
        assert_abs_diff_eq!(p.slope_correlation().unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn variable_order_is_construct_wave_indicator() {
        let shape = ModelShape::standard();
        let labels = shape.variable_labels();
        assert_eq!(labels.len(), 30);
        assert_eq!(labels[0], "B:w1:i1");
        assert_eq!(labels[14], "B:w5:i3");
        assert_eq!(labels[15], "H:w1:i1");
        assert_eq!(labels[29], "H:w5:i3");
        assert_eq!(shape.observed_index(1, 4, 2), 29);
        assert_eq!(shape.wave_variables(0), vec![0, 1, 2, 15, 16, 17]);
    }

    #[test]
    fn marker_identification_is_enforced() {
        let shape = ModelShape::standard();
        let mut p = PopulationParams::illustrative(&shape);
        p.loadings[1][0] = 0.9;
        assert!(matches!(p.validate(&shape), Err(Error::Domain(_))));
    }

    #[test]
    fn implied_means_follow_growth_trajectory() {
        let shape = ModelShape::standard();
        let p = PopulationParams::illustrative(&shape);
        let m = implied_moments(&p, &shape).unwrap();
        // Indicator 2 of H at wave 4: tau + lambda * (alpha_I + 3 alpha_S).
        let j = shape.observed_index(1, 3, 1);
        assert_abs_diff_eq!(m.mean[j], 0.1 + 0.9 * (0.0 + 3.0 * 0.5), epsilon = 1e-12);
    }

    #[test]
    fn shape_rejects_non_increasing_time_scores() {
        assert!(ModelShape::new(vec![0.0, 2.0, 1.0], 3, true).is_err());
        assert!(ModelShape::new(vec![0.0], 3, true).is_err());
        assert!(ModelShape::new(vec![0.0, 1.0], 0, true).is_err());
    }
}

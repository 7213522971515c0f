use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use btba::datagen::{sample_mvn, Dataset, SeedPlan};
use btba::estimator::{
    default_start, fit, loglik_at, loglik_gradient, pattern_loglik, OptimizerSettings, ParamVector, PatternSummary,
};
use btba::missingness::{apply_design, MissingDesign};
use btba::model::{implied_moments, set_slope_correlation, ModelShape, MomentStructure, PopulationParams};
use btba::Error;

fn population(rho: f64) -> (ModelShape, PopulationParams) {
    let shape = ModelShape::standard();
    let p = set_slope_correlation(&PopulationParams::illustrative(&shape), rho).unwrap();
    (shape, p)
}

/// Complete-data normal log-likelihood from the sample mean and biased
/// covariance, without any pattern machinery.
fn complete_loglik(data: &Dataset, m: &MomentStructure) -> f64 {
    let n = data.n_rows();
    let p = data.n_cols();
    let chol = m.cov.clone().cholesky().unwrap();
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mut quad = 0.0;
    for i in 0..n {
        let d = DVector::from_column_slice(data.row(i)) - &m.mean;
        quad += d.dot(&chol.solve(&d));
    }
    -0.5 * (n as f64 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + logdet) + quad)
}

#[test]
fn all_observed_fiml_equals_complete_data_likelihood() {
    let (shape, p) = population(0.3);
    let m = implied_moments(&p, &shape).unwrap();
    let data = sample_mvn(&m, 300, SeedPlan::new(1, 2, 3)).unwrap();
    let fiml = pattern_loglik(&data, &m).unwrap();
    let oracle = complete_loglik(&data, &m);
    assert!((fiml - oracle).abs() < 1e-8, "{fiml} vs {oracle}");
}

#[test]
fn standard_normal_at_zero() {
    let data = Dataset::complete(1, vec![0.0]).unwrap();
    let m = MomentStructure::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1)).unwrap();
    let ll = pattern_loglik(&data, &m).unwrap();
    assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
}

#[test]
fn saturated_fit_reproduces_sample_moments() {
    let shape = ModelShape::single_indicator(vec![0.0, 1.0], false).unwrap();
    let mut truth = PopulationParams::zeros(&shape);
    truth.growth_means = Vector4::new(1.0, 0.4, -0.5, 0.2);
    truth.growth_cov = Matrix4::new(
        1.0, 0.1, 0.3, 0.0, //
        0.1, 0.3, 0.05, 0.1, //
        0.3, 0.05, 0.8, -0.1, //
        0.0, 0.1, -0.1, 0.4,
    );
    let m = implied_moments(&truth, &shape).unwrap();
    let data = sample_mvn(&m, 500, SeedPlan::new(42, 0, 0)).unwrap();

    let n = data.n_rows() as f64;
    let mut mean = DVector::zeros(4);
    for i in 0..data.n_rows() {
        mean += DVector::from_column_slice(data.row(i));
    }
    mean /= n;
    let mut cov = DMatrix::zeros(4, 4);
    for i in 0..data.n_rows() {
        let d = DVector::from_column_slice(data.row(i)) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;

    let start = default_start(&data, &shape).unwrap();
    let result = fit(&data, &start, &OptimizerSettings::default()).unwrap();
    assert!(result.converged, "{:?}", result.status);
    let fitted = implied_moments(&result.natural(), &shape).unwrap();
    assert!((fitted.mean - &mean).amax() < 1e-6);
    assert!((fitted.cov - &cov).amax() < 1e-6);

    // The closed-form solution is a stationary point.
    let lambda = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, 0.0, 0.0, //
        1.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 1.0, 1.0,
    ]);
    let inv = lambda.try_inverse().unwrap();
    let alpha = &inv * &mean;
    let psi = &inv * &cov * inv.transpose();
    let mut at_optimum = PopulationParams::zeros(&shape);
    at_optimum.growth_means = Vector4::from_iterator(alpha.iter().copied());
    at_optimum.growth_cov = Matrix4::from_iterator(psi.iter().copied());
    let pv = ParamVector::from_natural(&at_optimum, &shape).unwrap();
    let g = loglik_gradient(&data, &pv).unwrap();
    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(gmax < 1e-6, "gradient max-norm {gmax}");
}

#[test]
fn large_sample_recovers_the_slope_correlation() {
    let (shape, p) = population(0.3);
    let m = implied_moments(&p, &shape).unwrap();
    let data = sample_mvn(&m, 6000, SeedPlan::new(2024, 0, 0)).unwrap();
    let start = default_start(&data, &shape).unwrap();
    let r = fit(&data, &start, &OptimizerSettings::default()).unwrap();
    assert!(r.converged);
    assert!((r.target_estimate - 0.3).abs() < 0.06, "{}", r.target_estimate);
    assert!(r.gradient_norm <= 1e-5);
}

#[test]
fn single_case_never_panics() {
    let (shape, p) = population(0.3);
    let m = implied_moments(&p, &shape).unwrap();
    let data = sample_mvn(&m, 1, SeedPlan::new(5, 0, 0)).unwrap();
    let start = default_start(&data, &shape).unwrap();
    match fit(&data, &start, &OptimizerSettings::default()) {
        Ok(r) => assert!(!r.converged),
        Err(Error::SingularCov { .. }) => {}
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn accepted_steps_do_not_decrease_the_likelihood() {
    let (shape, p) = population(0.55);
    let m = implied_moments(&p, &shape).unwrap();
    let data = sample_mvn(&m, 240, SeedPlan::new(8, 1, 1)).unwrap();
    let data = apply_design(&data, &MissingDesign::swmd6(), &shape).unwrap();
    let start = default_start(&data, &shape).unwrap();
    let r = fit(&data, &start, &OptimizerSettings::default()).unwrap();
    assert!(r.loglik_trace.len() > 2);
    let slack = 1e-12 * r.loglik.abs();
    for w in r.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - slack, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn row_order_does_not_matter() {
    let (shape, p) = population(0.3);
    let m = implied_moments(&p, &shape).unwrap();
    let data = sample_mvn(&m, 300, SeedPlan::new(9, 0, 0)).unwrap();
    let data = apply_design(&data, &MissingDesign::swmd6(), &shape).unwrap();
    let order: Vec<usize> = (0..data.n_rows()).map(|i| (i * 151) % data.n_rows()).collect();
    let shuffled = data.permute_rows(&order);

    let pv = ParamVector::from_natural(&p, &shape).unwrap();
    let a = loglik_at(&PatternSummary::from_dataset(&data).unwrap(), &pv).unwrap();
    let b = loglik_at(&PatternSummary::from_dataset(&shuffled).unwrap(), &pv).unwrap();
    assert!((a - b).abs() < 1e-10);

    let settings = OptimizerSettings::default();
    let fa = fit(&data, &default_start(&data, &shape).unwrap(), &settings).unwrap();
    let fb = fit(&shuffled, &default_start(&shuffled, &shape).unwrap(), &settings).unwrap();
    assert!((fa.target_estimate - fb.target_estimate).abs() < 1e-8);
}

#[test]
fn negating_centered_data_negates_mean_gradients() {
    let (shape, mut p) = population(0.3);
    p.growth_means = Vector4::zeros();
    for c in 0..2 {
        p.measurement_intercepts[c].iter_mut().for_each(|v| *v = 0.0);
    }
    let m = implied_moments(&p, &shape).unwrap();
    let data = sample_mvn(&m, 120, SeedPlan::new(10, 0, 0)).unwrap();
    let data = apply_design(&data, &MissingDesign::swmd6(), &shape).unwrap();
    let flipped_values: Vec<f64> = data.values().iter().map(|v| -v).collect();
    let flipped = Dataset::with_mask(data.n_cols(), flipped_values, data.mask().to_vec())
        .unwrap()
        .with_groups(data.groups().to_vec())
        .unwrap();

    let pv = ParamVector::from_natural(&p, &shape).unwrap();
    let g = loglik_gradient(&data, &pv).unwrap();
    let gf = loglik_gradient(&flipped, &pv).unwrap();
    let lay = pv.layout();
    let mean_params: Vec<usize> = (lay.means..lay.means + 4)
        .chain(lay.intercepts..lay.intercepts + 2 * lay.free_per_construct)
        .collect();
    for k in 0..g.len() {
        let tol = 1e-9 * g[k].abs().max(1.0);
        if mean_params.contains(&k) {
            assert!((g[k] + gf[k]).abs() < tol, "mean parameter {k}: {} vs {}", g[k], gf[k]);
        } else {
            assert!((g[k] - gf[k]).abs() < tol, "parameter {k}: {} vs {}", g[k], gf[k]);
        }
    }
}

#[test]
fn fitted_values_stay_proper() {
    let (shape, p) = population(0.55);
    let m = implied_moments(&p, &shape).unwrap();
    for rep in 0..3 {
        let data = sample_mvn(&m, 240, SeedPlan::new(12, 0, rep)).unwrap();
        let r = fit(&data, &default_start(&data, &shape).unwrap(), &OptimizerSettings::default()).unwrap();
        let nat = r.natural();
        assert!((-1.0..=1.0).contains(&r.target_estimate));
        assert!(nat.residual_vars.iter().chain(&nat.disturbance_vars).all(|&v| v > 0.0));
        assert!(nat.growth_cov.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    }
}

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use btba::diagnostics::{summarize, BiasReport, EstimateSample};
use btba::orchestration::{ConditionKey, DataCondition};
use btba::plots::{
    boxplot_panel, boxplot_reports, kde, ridge_panel_estimates, ridge_panel_zstar, BandwidthRule, FacetBy,
    LabeledSample, PanelLayout,
};

fn report(dc: DataCondition, rho: f64, n: usize, shift: f64, sd: f64, seed: u64) -> BiasReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(rho + shift, sd).unwrap();
    let estimates: Vec<f64> = (0..300).map(|_| normal.sample(&mut rng)).collect();
    let key = ConditionKey {
        data_condition: dc,
        rho,
        n_per_group: n,
    };
    let mut r = summarize(&EstimateSample::new(estimates, rho, "r_slopes", key.id()).unwrap()).unwrap();
    r.condition = Some(key);
    r
}

fn grid() -> Vec<BiasReport> {
    let mut out = Vec::new();
    let mut seed = 0;
    for dc in [DataCondition::Complete, DataCondition::Swmd6Fiml] {
        for rho in [0.1, 0.3, 0.55] {
            for (n, sd) in [(40, 0.12), (1000, 0.02)] {
                seed += 1;
                out.push(report(dc, rho, n, 0.01 * seed as f64 - 0.05, sd, seed));
            }
        }
    }
    out
}

fn oracle_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (m, values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

fn oracle_zstar(r: &BiasReport) -> Vec<f64> {
    let rmse = (r.estimates.iter().map(|e| (e - r.truth).powi(2)).sum::<f64>() / r.estimates.len() as f64).sqrt();
    r.estimates.iter().map(|e| (e - r.truth) / rmse).collect()
}

/// Checks every M/V annotation against a recomputation from the raw samples.
fn check_annotations(svg: &str, expected: &HashMap<String, (f64, f64)>) -> usize {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    let mut checked = 0;
    for node in doc.descendants().filter(|n| n.has_tag_name("text")) {
        let class = node.attribute("class").unwrap_or("");
        let (prefix, pick): (&str, fn((f64, f64)) -> f64) = match class {
            "annot-m" => ("M: ", |p| p.0),
            "annot-v" => ("V: ", |p| p.1),
            _ => continue,
        };
        let id = node.attribute("data-condition").expect("annotation names its condition");
        let text = node.text().unwrap();
        let shown: f64 = text.strip_prefix(prefix).unwrap().parse().unwrap();
        let want = pick(expected[id]);
        assert!((shown - want).abs() <= 0.0005 + 1e-12, "{id} {text} vs {want}");
        checked += 1;
    }
    checked
}

#[test]
fn estimate_ridgeline_annotations_match_recomputation() {
    let reports = grid();
    let expected: HashMap<_, _> = reports
        .iter()
        .map(|r| (r.condition_id.clone(), oracle_mean_var(&r.estimates)))
        .collect();
    let layout = PanelLayout::default();
    let svg = ridge_panel_estimates(&reports, &layout).unwrap().to_svg(&layout);
    assert_eq!(check_annotations(&svg, &expected), 2 * reports.len());
}

#[test]
fn zstar_ridgeline_annotations_match_recomputation() {
    let reports = grid();
    let expected: HashMap<_, _> = reports
        .iter()
        .map(|r| (r.condition_id.clone(), oracle_mean_var(&oracle_zstar(r))))
        .collect();
    for facet_by in [FacetBy::DataCondition, FacetBy::Rho, FacetBy::None] {
        let layout = PanelLayout {
            facet_by,
            ..PanelLayout::default()
        };
        let svg = ridge_panel_zstar(&reports, &layout).unwrap().to_svg(&layout);
        assert_eq!(check_annotations(&svg, &expected), 2 * reports.len());
    }
}

#[test]
fn density_curves_integrate_to_one() {
    let layout = PanelLayout::default();
    let panel = ridge_panel_estimates(&grid(), &layout).unwrap();
    for row in panel.rows() {
        let c = row.curve.as_ref().unwrap();
        let area: f64 = c
            .grid
            .windows(2)
            .zip(c.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum();
        assert!((area - 1.0).abs() < 0.01, "{}: {area}", row.label);
    }
}

#[test]
fn zstar_panel_has_reference_lines() {
    let layout = PanelLayout::default();
    let svg = ridge_panel_zstar(&grid(), &layout).unwrap().to_svg(&layout);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let count = |class: &str| doc.descendants().filter(|n| n.attribute("class") == Some(class)).count();
    // Drawn in each of the two data-condition facets.
    assert_eq!(count("ref-zero"), 2);
    assert_eq!(count("ref-band"), 4);
    assert_eq!(count("truth"), 0);
}

#[test]
fn estimate_panel_draws_one_truth_line_per_rho_block() {
    let layout = PanelLayout::default();
    let svg = ridge_panel_estimates(&grid(), &layout).unwrap().to_svg(&layout);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let truths = doc.descendants().filter(|n| n.attribute("class") == Some("truth")).count();
    assert_eq!(truths, 2 * 3);
}

#[test]
fn rendering_is_deterministic() {
    let layout = PanelLayout::default();
    let a = ridge_panel_estimates(&grid(), &layout).unwrap().to_svg(&layout);
    let b = ridge_panel_estimates(&grid(), &layout).unwrap().to_svg(&layout);
    assert_eq!(a, b);
    let truth_03: Vec<_> = grid().into_iter().filter(|r| r.truth == 0.3).collect();
    assert_eq!(
        boxplot_reports(&truth_03, &layout).unwrap(),
        boxplot_reports(&truth_03, &layout).unwrap()
    );
}

#[test]
fn boxplot_parses_and_shows_each_sample() {
    let layout = PanelLayout::default();
    let samples = vec![
        LabeledSample::new("wide", vec![0.1, 0.3, 0.2, 0.5, 0.35, 0.25, 1.4]),
        LabeledSample::new("flat", vec![0.3; 5]),
    ];
    let svg = boxplot_panel(&samples, 0.3, &layout).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let count = |class: &str| doc.descendants().filter(|n| n.attribute("class") == Some(class)).count();
    assert_eq!(count("box"), 2);
    assert_eq!(count("median"), 2);
    assert_eq!(count("density"), 1);
    assert_eq!(count("outlier"), 1);
}

#[test]
fn single_sample_density_matches_a_direct_sum() {
    let sample = [0.2, -0.4, 1.1, 0.0, 0.7, -1.3, 0.25];
    let c = kde(&sample, BandwidthRule::Fixed(0.3)).unwrap();
    let direct = |x: f64| {
        sample
            .iter()
            .map(|s| (-0.5 * ((x - s) / 0.3f64).powi(2)).exp())
            .sum::<f64>()
            / (sample.len() as f64 * 0.3 * (2.0 * std::f64::consts::PI).sqrt())
    };
    for (x, d) in c.grid.iter().zip(&c.density).step_by(37) {
        assert!((d - direct(*x)).abs() < 1e-12);
    }
}

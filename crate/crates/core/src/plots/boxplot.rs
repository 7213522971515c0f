use crate::diagnostics::BiasReport;
use crate::error::{Error, Result};
use crate::orchestration::ConditionKey;

use super::kde::{kde_with_grid, quantile_sorted};
use super::svg::{fixed, nice_ticks, tick_label, Scale, Svg};
use super::PanelLayout;

const SLOT_WIDTH: f64 = 96.0;
const BOX_WIDTH: f64 = 26.0;
const PLOT_HEIGHT: f64 = 380.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub label: String,
    pub values: Vec<f64>,
}

impl LabeledSample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme values within `whisker_iqr · IQR` of the box.
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub mean: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64], whisker_iqr: f64) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sample contains non-finite values".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let reach = whisker_iqr * (q3 - q1);
    let (lo_fence, hi_fence) = (q1 - reach, q3 + reach);
    let inside = s.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    let lower_whisker = inside.clone().fold(f64::INFINITY, f64::min);
    let upper_whisker = inside.fold(f64::NEG_INFINITY, f64::max);
    Ok(BoxStats {
        median: quantile_sorted(&s, 0.5),
        q1,
        q3,
        lower_whisker,
        upper_whisker,
        mean: s.iter().sum::<f64>() / s.len() as f64,
        outliers: s.iter().copied().filter(|v| !(lo_fence..=hi_fence).contains(v)).collect(),
    })
}

/// Vertical boxplots, one per sample, each with its density drawn as a
/// half-violin to the right of the box and a dashed line at `truth`.
/// Constant samples get a zero-height box and no density.
pub fn boxplot_panel(samples: &[LabeledSample], truth: f64, layout: &PanelLayout) -> Result<String> {
    if samples.is_empty() {
        return Err(Error::Layout("no samples to plot".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if samples[..i].iter().any(|o| o.label == s.label) {
            return Err(Error::Layout(format!("duplicate box label {:?}", s.label)));
        }
    }
    let stats = samples
        .iter()
        .map(|s| box_stats(&s.values, layout.whisker_iqr))
        .collect::<Result<Vec<_>>>()?;
    let curves = samples
        .iter()
        .map(|s| match kde_with_grid(&s.values, layout.bandwidth, layout.grid_points) {
            Ok(c) => Ok(Some(c)),
            Err(Error::DegenerateSample { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lo = truth;
    let mut hi = truth;
    for s in samples {
        for &v in &s.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    let (lo, hi) = (lo - pad, hi + pad);

    let left = 70.0;
    let top = 60.0;
    let width = left + SLOT_WIDTH * samples.len() as f64 + 20.0;
    let height = top + PLOT_HEIGHT + 70.0;
    let sy = Scale::new(lo, hi, top + PLOT_HEIGHT, top);
    let mut svg = Svg::new(width, height);
    let title = layout.title.clone().unwrap_or_else(|| "Boxplots of estimates".into());
    svg.text(width / 2.0, 22.0, &title, r#"class="title" text-anchor="middle" font-size="15""#);
    svg.text(
        width / 2.0,
        40.0,
        "Line: median; box: interquartile range; dot: mean; dashed line: population value",
        r#"class="caption" text-anchor="middle" fill="dimgray""#,
    );

    let right = left + SLOT_WIDTH * samples.len() as f64;
    svg.line(left, top, left, top + PLOT_HEIGHT, "axis", r#"stroke="black""#);
    let ticks = nice_ticks(sy.domain().0, sy.domain().1, 6);
    for &t in &ticks {
        let y = sy.map(t);
        svg.line(left - 5.0, y, left, y, "tick", r#"stroke="black""#);
        svg.text(left - 8.0, y + 4.0, &tick_label(t, &ticks), r#"class="tick-label" text-anchor="end""#);
    }

    for (i, ((sample, st), curve)) in samples.iter().zip(&stats).zip(&curves).enumerate() {
        let cx = left + SLOT_WIDTH * (i as f64 + 0.5) - 12.0;
        let bx = cx - BOX_WIDTH / 2.0;
        if let Some(c) = curve {
            let max_d = c.max_density();
            let span = SLOT_WIDTH / 2.0 - 4.0;
            let base = cx + BOX_WIDTH / 2.0 + 2.0;
            let mut pts = vec![(base, sy.map(c.grid[0]))];
            for (g, d) in c.grid.iter().zip(&c.density) {
                pts.push((base + d / max_d * span, sy.map(*g)));
            }
            pts.push((base, sy.map(c.grid[c.grid.len() - 1])));
            svg.path(&pts, true, "density", r#"fill="rgb(141,160,203)" fill-opacity="0.5" stroke="rgb(51,51,51)" stroke-width="0.8""#);
        }
        svg.line(cx, sy.map(st.lower_whisker), cx, sy.map(st.q1), "whisker", r#"stroke="black""#);
        svg.line(cx, sy.map(st.q3), cx, sy.map(st.upper_whisker), "whisker", r#"stroke="black""#);
        for w in [st.lower_whisker, st.upper_whisker] {
            svg.line(cx - 6.0, sy.map(w), cx + 6.0, sy.map(w), "whisker-cap", r#"stroke="black""#);
        }
        svg.rect(
            bx,
            sy.map(st.q3),
            BOX_WIDTH,
            sy.map(st.q1) - sy.map(st.q3),
            "box",
            r#"fill="white" stroke="black""#,
        );
        svg.line(bx, sy.map(st.median), bx + BOX_WIDTH, sy.map(st.median), "median", r#"stroke="black" stroke-width="2""#);
        for &o in &st.outliers {
            svg.circle(cx, sy.map(o), 1.8, "outlier", r#"fill="none" stroke="gray""#);
        }
        svg.circle(cx, sy.map(st.mean), 3.0, "mean", r#"fill="rgb(217,95,2)""#);
        svg.text(
            cx + 10.0,
            top + PLOT_HEIGHT + 18.0,
            &sample.label,
            r#"class="box-label" text-anchor="middle" font-size="10""#,
        );
        svg.text(
            cx + 10.0,
            top + PLOT_HEIGHT + 32.0,
            &format!("Mdn: {}", fixed(st.median, layout.decimals)),
            &format!(r#"class="annot-median" data-row="{}" text-anchor="middle" font-size="10""#, super::svg::escape(&sample.label)),
        );
    }
    svg.line(left, sy.map(truth), right, sy.map(truth), "truth", r#"stroke="black" stroke-width="1.2" stroke-dasharray="6,4""#);
    Ok(svg.finish())
}

/// Boxplots of several reports' estimates. All reports must share the
/// same truth.
pub fn boxplot_reports(reports: &[BiasReport], layout: &PanelLayout) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Layout("no conditions to plot".into()))?;
    if let Some(r) = reports.iter().find(|r| r.truth != first.truth) {
        return Err(Error::Layout(format!(
            "boxplot panel mixes truths {} and {} ({})",
            first.truth, r.truth, r.condition_id
        )));
    }
    let samples: Vec<LabeledSample> = reports
        .iter()
        .map(|r| {
            let key: Option<ConditionKey> = r.condition.or_else(|| r.condition_id.parse().ok());
            let label = match key {
                Some(k) => format!("{} n={}", k.data_condition.slug(), k.n_per_group),
                None => r.condition_id.clone(),
            };
            LabeledSample::new(label, r.estimates.clone())
        })
        .collect();
    boxplot_panel(&samples, first.truth, layout)
}

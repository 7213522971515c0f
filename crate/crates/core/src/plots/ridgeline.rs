use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write;

use crate::diagnostics::{mean_and_variance, BiasReport};
use crate::error::{Error, Result};
use crate::orchestration::ConditionKey;

use super::kde::{kde_with_grid, DensityCurve};
use super::svg::{fixed, nice_ticks, tick_label, Scale, Svg};
use super::{FacetBy, PanelLayout};

const PALETTE: [&str; 6] = ["#8da0cb", "#66c2a5", "#fc8d62", "#e78ac3", "#a6d854", "#ffd92f"];
const LABEL_WIDTH: f64 = 130.0;
const ANNOT_WIDTH: f64 = 150.0;
const MODE_WIDTH: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
    Dotted,
}

impl LineStyle {
    fn attrs(self) -> &'static str {
        match self {
            Self::Solid => r#"stroke="black" stroke-width="1.5""#,
            Self::Dashed => r#"stroke="black" stroke-width="1" stroke-dasharray="6,4""#,
            Self::Dotted => r#"stroke="black" stroke-width="1.2" stroke-dasharray="1.5,3""#,
        }
    }
}

/// A vertical line across every row of every facet.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLine {
    pub x: f64,
    pub style: LineStyle,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeRow {
    pub label: String,
    pub condition_id: String,
    /// `None` when the sample has zero spread; drawn as a spike at the mean.
    pub curve: Option<DensityCurve>,
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    /// Population value drawn as a solid line through the row.
    pub truth: Option<f64>,
    /// Rows of one group share a fill color.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub title: String,
    pub rows: Vec<RidgeRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgePanel {
    pub title: String,
    pub x_label: String,
    pub facets: Vec<Facet>,
    pub reference_lines: Vec<ReferenceLine>,
}

#[derive(Clone, Copy, PartialEq)]
enum Source {
    Estimates,
    Zstar,
}

struct Placed<'a> {
    facet_rank: (u8, f64),
    facet_title: String,
    within: (u8, f64),
    n: usize,
    label: String,
    report: &'a BiasReport,
}

fn place<'a>(report: &'a BiasReport, facet_by: FacetBy) -> Placed<'a> {
    let key: Option<ConditionKey> = report
        .condition
        .or_else(|| report.condition_id.parse().ok());
    let Some(k) = key else {
        return Placed {
            facet_rank: (u8::MAX, 0.0),
            facet_title: "Other conditions".into(),
            within: (0, 0.0),
            n: 0,
            label: report.condition_id.clone(),
            report,
        };
    };
    let dc = k.data_condition as u8;
    let (facet_rank, facet_title, within, label) = match facet_by {
        FacetBy::DataCondition => (
            (dc, 0.0),
            k.data_condition.label().to_string(),
            (0, k.rho),
            format!("ρ = {}, n = {}", k.rho, k.n_per_group),
        ),
        FacetBy::Rho => (
            (0, k.rho),
            format!("ρ = {}", k.rho),
            (dc, 0.0),
            format!("{}, n = {}", k.data_condition.label(), k.n_per_group),
        ),
        FacetBy::None => (
            (0, 0.0),
            "All conditions".to_string(),
            (dc, k.rho),
            format!("{}, ρ = {}, n = {}", k.data_condition.label(), k.rho, k.n_per_group),
        ),
    };
    Placed {
        facet_rank,
        facet_title,
        within,
        n: k.n_per_group,
        label,
        report,
    }
}

fn cmp_pair(a: (u8, f64), b: (u8, f64)) -> Ordering {
    a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
}

fn build(reports: &[BiasReport], layout: &PanelLayout, source: Source) -> Result<RidgePanel> {
    if reports.is_empty() {
        return Err(Error::Layout("no conditions to plot".into()));
    }
    let mut placed: Vec<Placed> = reports.iter().map(|r| place(r, layout.facet_by)).collect();
    // Stable sort keeps input order among unkeyed reports.
    placed.sort_by(|a, b| {
        cmp_pair(a.facet_rank, b.facet_rank)
            .then(cmp_pair(a.within, b.within))
            .then(b.n.cmp(&a.n))
    });

    let mut facets: Vec<Facet> = Vec::new();
    let mut last_within = None;
    for p in placed {
        if facets.last().map(|f| &f.title) != Some(&p.facet_title) {
            facets.push(Facet {
                title: p.facet_title.clone(),
                rows: Vec::new(),
            });
            last_within = None;
        }
        let facet = facets.last_mut().expect("pushed");
        if facet.rows.iter().any(|r| r.label == p.label) {
            return Err(Error::Layout(format!(
                "duplicate row {:?} in panel {:?}",
                p.label, facet.title
            )));
        }
        let group = match (facet.rows.last(), last_within) {
            (Some(prev), Some(w)) if w == (p.within.0, p.within.1.to_bits()) => prev.group,
            (Some(prev), _) => prev.group + 1,
            (None, _) => 0,
        };
        last_within = Some((p.within.0, p.within.1.to_bits()));

        let values = match source {
            Source::Estimates => &p.report.estimates,
            Source::Zstar => &p.report.zstar,
        };
        let (mean, variance) = mean_and_variance(values, p.report.variance_kind);
        let curve = match kde_with_grid(values, layout.bandwidth, layout.grid_points) {
            Ok(c) => Some(c),
            Err(Error::DegenerateSample { .. }) => None,
            Err(e) => return Err(e),
        };
        facet.rows.push(RidgeRow {
            label: p.label,
            condition_id: p.report.condition_id.clone(),
            curve,
            mean,
            variance,
            sd: variance.sqrt(),
            truth: (source == Source::Estimates).then_some(p.report.truth),
            group,
        });
    }

    let (title, x_label, reference_lines) = match source {
        Source::Estimates => (
            "Ridgeline plot of estimates".to_string(),
            "Estimate".to_string(),
            Vec::new(),
        ),
        Source::Zstar => {
            let b = layout.zstar_band;
            let band = format!("acceptable zone ±{b}");
            (
                "Ridgeline plot of Z*".to_string(),
                "Z*".to_string(),
                vec![
                    ReferenceLine {
                        x: 0.0,
                        style: LineStyle::Dotted,
                        caption: "Z* = 0".into(),
                    },
                    ReferenceLine {
                        x: -b,
                        style: LineStyle::Dashed,
                        caption: band.clone(),
                    },
                    ReferenceLine {
                        x: b,
                        style: LineStyle::Dashed,
                        caption: band,
                    },
                ],
            )
        }
    };
    Ok(RidgePanel {
        title: layout.title.clone().unwrap_or(title),
        x_label,
        facets,
        reference_lines,
    })
}

pub fn ridge_panel_estimates(reports: &[BiasReport], layout: &PanelLayout) -> Result<RidgePanel> {
    build(reports, layout, Source::Estimates)
}

pub fn ridge_panel_zstar(reports: &[BiasReport], layout: &PanelLayout) -> Result<RidgePanel> {
    build(reports, layout, Source::Zstar)
}

/// Ridgeline SVG of the raw estimates, one row per condition.
pub fn ridgeline_estimates(reports: &[BiasReport], layout: &PanelLayout) -> Result<String> {
    Ok(ridge_panel_estimates(reports, layout)?.to_svg(layout))
}

/// Ridgeline SVG of Z*, with the zero line and the acceptable zone.
pub fn ridgeline_zstar(reports: &[BiasReport], layout: &PanelLayout) -> Result<String> {
    Ok(ridge_panel_zstar(reports, layout)?.to_svg(layout))
}

impl RidgePanel {
    fn x_domain(&self, facet: &Facet) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut take = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        for row in &facet.rows {
            match &row.curve {
                Some(c) => {
                    take(c.grid[0]);
                    take(c.grid[c.grid.len() - 1]);
                }
                None => take(row.mean),
            }
            take(row.mean - row.sd);
            take(row.mean + row.sd);
            if let Some(t) = row.truth {
                take(t);
            }
        }
        for r in &self.reference_lines {
            take(r.x);
        }
        let pad = if hi > lo { 0.02 * (hi - lo) } else { 0.5 };
        (lo - pad, hi + pad)
    }

    pub fn to_svg(&self, layout: &PanelLayout) -> String {
        let rh = layout.row_height;
        let ridge_h = layout.ridge_scale * rh;
        let right = ANNOT_WIDTH + if layout.show_mode { MODE_WIDTH } else { 0.0 };
        let facet_w = LABEL_WIDTH + layout.facet_width + right;
        let caption_lines = self.captions();
        let top = 34.0 + 16.0 * caption_lines.len() as f64 + 20.0;
        let max_rows = self.facets.iter().map(|f| f.rows.len()).max().unwrap_or(1);
        let axis_y = top + ridge_h + (max_rows - 1) as f64 * rh + 10.0;
        let height = axis_y + 48.0;
        let width = facet_w * self.facets.len() as f64;
        let mut svg = Svg::new(width, height);

        svg.text(width / 2.0, 22.0, &self.title, r#"class="title" text-anchor="middle" font-size="15""#);
        for (i, c) in caption_lines.iter().enumerate() {
            svg.text(
                width / 2.0,
                40.0 + 16.0 * i as f64,
                c,
                r#"class="caption" text-anchor="middle" fill="dimgray""#,
            );
        }

        for (fi, facet) in self.facets.iter().enumerate() {
            let x0 = fi as f64 * facet_w;
            let plot_l = x0 + LABEL_WIDTH;
            let plot_r = plot_l + layout.facet_width;
            let (lo, hi) = self.x_domain(facet);
            let sx = Scale::new(lo, hi, plot_l, plot_r);
            let max_d = facet
                .rows
                .iter()
                .filter_map(|r| r.curve.as_ref().map(DensityCurve::max_density))
                .fold(0.0, f64::max);
            let baseline = |i: usize| top + ridge_h + i as f64 * rh;
            svg.text(
                (plot_l + plot_r) / 2.0,
                top - 6.0,
                &facet.title,
                r#"class="facet-title" text-anchor="middle" font-size="13" font-weight="bold""#,
            );

            for (i, row) in facet.rows.iter().enumerate() {
                let y = baseline(i);
                let color = PALETTE[row.group % PALETTE.len()];
                match &row.curve {
                    Some(c) => {
                        let mut pts = Vec::with_capacity(c.grid.len() + 2);
                        pts.push((sx.map(c.grid[0]), y));
                        for (g, d) in c.grid.iter().zip(&c.density) {
                            let h = if max_d > 0.0 { d / max_d * ridge_h } else { 0.0 };
                            pts.push((sx.map(*g), y - h));
                        }
                        pts.push((sx.map(c.grid[c.grid.len() - 1]), y));
                        svg.path(
                            &pts,
                            true,
                            "ridge",
                            &format!(r#"fill="{color}" fill-opacity="0.75" stroke="rgb(51,51,51)" stroke-width="0.8""#),
                        );
                    }
                    None => svg.line(
                        sx.map(row.mean),
                        y,
                        sx.map(row.mean),
                        y - 0.8 * ridge_h,
                        "spike",
                        &format!(r#"stroke="{color}" stroke-width="3""#),
                    ),
                }
                svg.line(
                    sx.map(row.mean - row.sd),
                    y,
                    sx.map(row.mean + row.sd),
                    y,
                    "sd-bar",
                    r#"stroke="black" stroke-width="2""#,
                );
                svg.circle(sx.map(row.mean), y, 3.0, "mean", r#"fill="black""#);
                svg.text(
                    plot_l - 8.0,
                    y - 2.0,
                    &row.label,
                    r#"class="row-label" text-anchor="end""#,
                );
                let row_attr = format!(
                    r#"data-row="{}" data-condition="{}""#,
                    super::svg::escape(&row.label),
                    super::svg::escape(&row.condition_id)
                );
                let ax = plot_r + 10.0;
                svg.text(
                    ax,
                    y - 2.0,
                    &format!("M: {}", fixed(row.mean, layout.decimals)),
                    &format!(r#"class="annot-m" {row_attr}"#),
                );
                svg.text(
                    ax + 70.0,
                    y - 2.0,
                    &format!("V: {}", fixed(row.variance, layout.decimals)),
                    &format!(r#"class="annot-v" {row_attr}"#),
                );
                if layout.show_mode {
                    let mode = row.curve.as_ref().map_or(row.mean, DensityCurve::mode);
                    svg.text(
                        ax + 140.0,
                        y - 2.0,
                        &format!("mode: {}", fixed(mode, layout.decimals)),
                        &format!(r#"class="annot-mode" {row_attr}"#),
                    );
                }
            }

            // Population lines: one segment per run of rows sharing a truth.
            let mut i = 0;
            while i < facet.rows.len() {
                let Some(t) = facet.rows[i].truth else {
                    i += 1;
                    continue;
                };
                let mut j = i;
                while j + 1 < facet.rows.len() && facet.rows[j + 1].truth == Some(t) {
                    j += 1;
                }
                svg.line(
                    sx.map(t),
                    baseline(i) - ridge_h,
                    sx.map(t),
                    baseline(j) + 4.0,
                    "truth",
                    LineStyle::Solid.attrs(),
                );
                i = j + 1;
            }
            for r in &self.reference_lines {
                let class = match r.style {
                    LineStyle::Dotted => "ref-zero",
                    _ => "ref-band",
                };
                svg.line(sx.map(r.x), top, sx.map(r.x), axis_y, class, r.style.attrs());
            }

            svg.line(plot_l, axis_y, plot_r, axis_y, "axis", r#"stroke="black""#);
            let ticks = nice_ticks(sx.domain().0, sx.domain().1, 6);
            for &t in &ticks {
                let x = sx.map(t);
                svg.line(x, axis_y, x, axis_y + 5.0, "tick", r#"stroke="black""#);
                svg.text(x, axis_y + 18.0, &tick_label(t, &ticks), r#"class="tick-label" text-anchor="middle""#);
            }
            svg.text(
                (plot_l + plot_r) / 2.0,
                axis_y + 38.0,
                &self.x_label,
                r#"class="axis-label" text-anchor="middle""#,
            );
        }
        svg.finish()
    }

    fn captions(&self) -> Vec<String> {
        let mut out = vec!["Dots are means, bars show ±1 SD".to_string()];
        if self.facets.iter().flat_map(|f| &f.rows).any(|r| r.truth.is_some()) {
            out[0].push_str("; the solid vertical line is the population value");
        }
        let mut seen = BTreeSet::new();
        for r in &self.reference_lines {
            if seen.insert(r.caption.clone()) {
                let style = match r.style {
                    LineStyle::Solid => "solid",
                    LineStyle::Dashed => "dashed",
                    LineStyle::Dotted => "dotted",
                };
                out.push(format!("{style} line: {}", r.caption));
            }
        }
        out
    }

    /// `facet,row,grid,density` for replotting elsewhere. Spike rows are
    /// omitted.
    pub fn density_csv(&self) -> String {
        let mut out = String::from("facet,row,grid,density\n");
        for f in &self.facets {
            for r in &f.rows {
                if let Some(c) = &r.curve {
                    for (g, d) in c.grid.iter().zip(&c.density) {
                        let _ = writeln!(out, "{},{},{g},{d}", quote(&f.title), quote(&r.label));
                    }
                }
            }
        }
        out
    }

    pub fn rows(&self) -> impl Iterator<Item = &RidgeRow> {
        self.facets.iter().flat_map(|f| f.rows.iter())
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

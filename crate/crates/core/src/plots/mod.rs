//! Self-contained SVG figures: ridgelines of estimates and of Z*, and
//! boxplots with overlaid densities.
//!
//! Output is deterministic: coordinates use fixed two-decimal formatting and
//! documents carry no timestamps. Annotations are emitted as `<text>`
//! elements with classes `annot-m`, `annot-v` (and optionally `annot-mode`)
//! with `data-row` (the row label) and `data-condition` (the condition id)
//! attributes.

mod boxplot;
mod kde;
mod ridgeline;
mod svg;

pub use boxplot::{box_stats, boxplot_panel, boxplot_reports, BoxStats, LabeledSample};
pub use kde::{kde, kde_with_grid, quantile_sorted, silverman_bandwidth, BandwidthRule, DensityCurve, DEFAULT_GRID_POINTS};
pub use ridgeline::{
    ridge_panel_estimates, ridge_panel_zstar, ridgeline_estimates, ridgeline_zstar, Facet, LineStyle,
    ReferenceLine, RidgePanel, RidgeRow,
};

use serde::{Deserialize, Serialize};

/// How ridgeline rows are split into side-by-side panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetBy {
    /// One panel per data condition; rows grouped by ρ, then n descending.
    #[default]
    DataCondition,
    /// One panel per ρ; rows grouped by data condition, then n descending.
    Rho,
    /// A single panel.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelLayout {
    pub facet_by: FacetBy,
    pub grid_points: usize,
    pub bandwidth: BandwidthRule,
    pub whisker_iqr: f64,
    pub decimals: usize,
    /// Annotate each ridge with its density mode.
    pub show_mode: bool,
    /// Half-width of the acceptable Z* zone drawn as dashed lines.
    pub zstar_band: f64,
    pub facet_width: f64,
    pub row_height: f64,
    /// Tallest ridge height in rows.
    pub ridge_scale: f64,
    pub title: Option<String>,
}

impl Default for PanelLayout {
    fn default() -> Self {
        Self {
            facet_by: FacetBy::DataCondition,
            grid_points: DEFAULT_GRID_POINTS,
            bandwidth: BandwidthRule::Silverman,
            whisker_iqr: 1.5,
            decimals: 3,
            show_mode: false,
            zstar_band: 0.1,
            facet_width: 460.0,
            row_height: 26.0,
            ridge_scale: 2.2,
            title: None,
        }
    }
}

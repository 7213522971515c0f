use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `0.9 · min(sd, IQR/1.34) · n^(-1/5)`; falls back to sd when the IQR is zero.
    #[default]
    Silverman,
    Fixed(f64),
}

/// Gaussian kernel density estimate on an evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

impl DensityCurve {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Grid point of highest density.
    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        self.grid[i]
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    /// Linear interpolation; zero outside the grid.
    pub fn at(&self, x: f64) -> f64 {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        let step = (hi - lo) / (self.grid.len() - 1) as f64;
        let pos = ((x - lo) / step).min((self.grid.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let t = pos - i as f64;
        self.density[i] * (1.0 - t) + self.density[i + 1] * t
    }
}

/// Type-7 quantile of sorted data (linear interpolation between order statistics).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn checked_sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.len() < 2 {
        return Err(Error::Domain(format!(
            "density estimation needs at least two values, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sample contains non-finite values".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    let sorted = checked_sorted(sample)?;
    silverman_sorted(&sorted)
}

fn silverman_sorted(sorted: &[f64]) -> Result<f64> {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateSample { value: sorted[0] });
    }
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * n.powf(-0.2))
}

pub fn kde(sample: &[f64], rule: BandwidthRule) -> Result<DensityCurve> {
    kde_with_grid(sample, rule, DEFAULT_GRID_POINTS)
}

pub fn kde_with_grid(sample: &[f64], rule: BandwidthRule, grid_points: usize) -> Result<DensityCurve> {
    if grid_points < 2 {
        return Err(Error::Domain("density grid needs at least two points".into()));
    }
    let sorted = checked_sorted(sample)?;
    let h = match rule {
        BandwidthRule::Silverman => silverman_sorted(&sorted)?,
        BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => {
            if sorted[0] == sorted[sorted.len() - 1] {
                return Err(Error::DegenerateSample { value: sorted[0] });
            }
            h
        }
        BandwidthRule::Fixed(h) => return Err(Error::Domain(format!("bandwidth {h} must be positive"))),
    };
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| if i == grid_points - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let norm = 1.0 / (sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&x| {
            let s: f64 = sorted
                .iter()
                .map(|&xi| {
                    let u = (x - xi) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            s * norm
        })
        .collect();
    Ok(DensityCurve {
        grid,
        density,
        bandwidth: h,
        n: sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::SeedPlan;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn standard_normal_peak() {
        let mut rng = SeedPlan::new(11, 0, 0).rng();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let c = kde(&xs, BandwidthRule::Silverman).unwrap();
        let peak = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((c.at(0.0) - peak).abs() < 0.05);
        assert!((c.integral() - 1.0).abs() < 0.01);
        assert_eq!(c.grid.len(), 512);
    }

    #[test]
    fn two_point_sample_is_symmetric() {
        let c = kde(&[-1.0, 1.0], BandwidthRule::Silverman).unwrap();
        let n = c.grid.len();
        for i in 0..n {
            assert!((c.grid[i] + c.grid[n - 1 - i]).abs() < 1e-12);
            assert!((c.density[i] - c.density[n - 1 - i]).abs() < 1e-9);
        }
        assert!(c.at(1.0) > c.at(0.0));
    }

    #[test]
    fn translation_moves_the_curve() {
        let xs = [0.1, 0.4, 0.35, 0.9, 0.55, 0.2];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 2.5).collect();
        let a = kde(&xs, BandwidthRule::Silverman).unwrap();
        let b = kde(&shifted, BandwidthRule::Silverman).unwrap();
        assert!((a.bandwidth - b.bandwidth).abs() < 1e-12);
        for i in 0..a.grid.len() {
            assert!((a.grid[i] + 2.5 - b.grid[i]).abs() < 1e-12);
            assert!((a.density[i] - b.density[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_and_short_samples() {
        assert!(matches!(
            kde(&[0.3, 0.3, 0.3], BandwidthRule::Silverman),
            Err(Error::DegenerateSample { value }) if value == 0.3
        ));
        assert!(kde(&[1.0], BandwidthRule::Silverman).is_err());
        assert!(kde(&[1.0, f64::NAN], BandwidthRule::Silverman).is_err());
    }

    #[test]
    fn silverman_uses_iqr_when_smaller() {
        // sd ≈ 1.87, IQR/1.34 ≈ 1.87 for 1..=6; a far outlier inflates sd only.
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 100.0];
        let sorted = xs;
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let h = silverman_bandwidth(&xs).unwrap();
        assert!((h - 0.9 * iqr / 1.34 * 7f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 2.0);
        assert_eq!(quantile_sorted(&xs, 0.75), 4.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.5), 1.5);
    }
}

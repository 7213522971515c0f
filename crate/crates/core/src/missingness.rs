//! Planned wave-missing designs.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelShape;

/// Group-by-wave observation grid; `pattern[g][t]` is true when group `g + 1`
/// is measured at wave `t + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingDesign {
    pub name: String,
    pub pattern: Vec<Vec<bool>>,
}

impl MissingDesign {
    pub fn new(name: impl Into<String>, pattern: Vec<Vec<bool>>) -> Result<Self> {
        let design = Self {
            name: name.into(),
            pattern,
        };
        design.validate()?;
        Ok(design)
    }

    /// Six groups over five waves: group 1 is complete and group `g` (2..=6)
    /// skips wave `7 - g`.
    pub fn swmd6() -> Self {
        let pattern = (0..6)
            .map(|g| (0..5).map(|t| g == 0 || t != 5 - g).collect())
            .collect();
        Self {
            name: "SWMD-6".into(),
            pattern,
        }
    }

    /// Every group observes every wave.
    pub fn identity(groups: usize, waves: usize) -> Self {
        Self {
            name: "complete".into(),
            pattern: vec![vec![true; waves]; groups],
        }
    }

    pub fn groups(&self) -> usize {
        self.pattern.len()
    }

    pub fn waves(&self) -> usize {
        self.pattern.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pattern.is_empty() {
            return Err(Error::Design("design has no groups".into()));
        }
        let waves = self.waves();
        if waves == 0 || self.pattern.iter().any(|row| row.len() != waves) {
            return Err(Error::Design("design rows must share a nonzero wave count".into()));
        }
        if let Some(g) = self.pattern.iter().position(|row| !row.iter().any(|&o| o)) {
            return Err(Error::Design(format!("group {} observes no wave", g + 1)));
        }
        Ok(())
    }

    /// Number of groups observing each wave.
    pub fn wave_coverage(&self) -> Vec<usize> {
        (0..self.waves())
            .map(|t| self.pattern.iter().filter(|row| row[t]).count())
            .collect()
    }
}

/// Masks every indicator of both constructs at each wave a row's group skips.
/// Observed values are left untouched.
pub fn apply_design(data: &Dataset, design: &MissingDesign, shape: &ModelShape) -> Result<Dataset> {
    design.validate()?;
    if design.waves() != shape.waves() {
        return Err(Error::Design(format!(
            "design covers {} waves but the model has {}",
            design.waves(),
            shape.waves()
        )));
    }
    if data.n_cols() != shape.n_observed() {
        return Err(Error::Design(format!(
            "dataset has {} columns but the model has {} indicators",
            data.n_cols(),
            shape.n_observed()
        )));
    }
    if let Some(&g) = data
        .groups()
        .iter()
        .find(|&&g| g == 0 || usize::from(g) > design.groups())
    {
        return Err(Error::Design(format!(
            "group label {g} is outside 1..={}",
            design.groups()
        )));
    }

    let wave_vars: Vec<Vec<usize>> = (0..shape.waves()).map(|t| shape.wave_variables(t)).collect();
    let mut out = data.clone();
    let n_cols = data.n_cols();
    let groups = data.groups().to_vec();
    let mask = out.mask_mut();
    for (i, &g) in groups.iter().enumerate() {
        let row = &design.pattern[usize::from(g) - 1];
        for (t, &observed) in row.iter().enumerate() {
            if !observed {
                for &j in &wave_vars[t] {
                    mask[i * n_cols + j] = false;
                }
            }
        }
    }
    out.check_rows_observed()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_one() -> Vec<Vec<bool>> {
        // Rows transcribed from the SWMD-6 grid (true = measured).
        vec![
            vec![true, true, true, true, true],
            vec![true, true, true, true, false],
            vec![true, true, true, false, true],
            vec![true, true, false, true, true],
            vec![true, false, true, true, true],
            vec![false, true, true, true, true],
        ]
    }

    fn dataset(n: usize) -> Dataset {
        let values = (0..n * 30).map(|v| v as f64 * 0.5 - 3.0).collect();
        Dataset::complete(30, values).unwrap()
    }

    #[test]
    fn swmd6_matches_grid_exactly() {
        let d = MissingDesign::swmd6();
        assert_eq!(d.pattern, table_one());
        assert_eq!(d.wave_coverage(), vec![5; 5]);
        assert!(d.pattern.iter().all(|r| r.iter().filter(|&&o| o).count() >= 4));
    }

    #[test]
    fn group_one_rows_are_untouched() {
        let data = dataset(12);
        let out = apply_design(&data, &MissingDesign::swmd6(), &ModelShape::standard()).unwrap();
        for i in 0..2 {
            assert!(out.mask_row(i).iter().all(|&m| m));
        }
    }

    #[test]
    fn group_six_loses_first_wave() {
        let shape = ModelShape::standard();
        let data = dataset(12);
        let out = apply_design(&data, &MissingDesign::swmd6(), &shape).unwrap();
        let row = out.mask_row(11);
        assert_eq!(row.iter().filter(|&&m| m).count(), 24);
        for j in shape.wave_variables(0) {
            assert!(!row[j]);
        }
    }

    #[test]
    fn identity_design_is_a_no_op() {
        let data = dataset(6);
        let out = apply_design(&data, &MissingDesign::identity(6, 5), &ModelShape::standard()).unwrap();
        assert_eq!(out, data);
    }

    #[test]
    fn masked_fraction_is_five_thirtieths() {
        let data = dataset(60);
        let out = apply_design(&data, &MissingDesign::swmd6(), &ModelShape::standard()).unwrap();
        let masked = out.mask().iter().filter(|&&m| !m).count();
        // 5 of 6 groups each lose 6 of 30 cells.
        assert_eq!(masked * 30, out.mask().len() * 5);
        assert_eq!(out.values(), data.values());
    }

    #[test]
    fn out_of_range_group_is_a_design_error() {
        let data = dataset(6).with_groups(vec![1, 2, 3, 4, 5, 7]).unwrap();
        let err = apply_design(&data, &MissingDesign::swmd6(), &ModelShape::standard());
        assert!(matches!(err, Err(Error::Design(_))));
    }

    #[test]
    fn design_that_empties_a_group_is_rejected() {
        let mut pattern = table_one();
        pattern[2] = vec![false; 5];
        assert!(MissingDesign::new("bad", pattern).is_err());
    }
}

//! Reproducible multivariate-normal data generation.
//!
//! Every replication draws from its own ChaCha20 stream. The stream is keyed
//! by `(base_seed, condition_index, replication_index)`: the generator is
//! seeded from `base_seed` and the 64-bit stream id is
//! `condition_index << 32 | replication_index`. Replications can therefore run
//! in any order on any number of workers and still produce identical data.
//!
//! Standard-normal deviates come from `rand_distr::StandardNormal`
//! (ziggurat), consumed row by row in variable order.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MomentStructure;

/// Number of planned-missingness groups rows are split into.
pub const GROUPS: usize = 6;

/// Identifies the normal-deviate method in run metadata.
pub const NORMAL_METHOD: &str = "ziggurat (rand_distr::StandardNormal)";
/// Identifies the generator and stream-splitting scheme in run metadata.
pub const RNG_SCHEME: &str = "chacha20; seed_from_u64(base_seed); stream = condition_index << 32 | replication_index";

const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPlan {
    pub base_seed: u64,
    pub condition_index: u32,
    pub replication_index: u32,
}

impl SeedPlan {
    pub fn new(base_seed: u64, condition_index: u32, replication_index: u32) -> Self {
        Self {
            base_seed,
            condition_index,
            replication_index,
        }
    }

    pub fn stream_id(&self) -> u64 {
        (u64::from(self.condition_index) << 32) | u64::from(self.replication_index)
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id());
        rng
    }
}

/// Rectangular data with an observation mask and group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    group: Vec<u8>,
    pub condition_id: String,
    pub replication_id: u64,
}

impl Dataset {
    /// Builds a fully observed dataset from row-major values. Groups are
    /// assigned in contiguous blocks.
    pub fn complete(n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || values.len() % n_cols != 0 {
            return Err(Error::Domain(format!(
                "{} values do not form rows of width {n_cols}",
                values.len()
            )));
        }
        let n_rows = values.len() / n_cols;
        Ok(Self {
            n_rows,
            n_cols,
            mask: vec![true; values.len()],
            values,
            group: block_groups(n_rows),
            condition_id: String::new(),
            replication_id: 0,
        })
    }

    /// Builds a dataset with an explicit mask. Every row must keep at least
    /// one observed cell.
    pub fn with_mask(n_cols: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let mut data = Self::complete(n_cols, values)?;
        if mask.len() != data.values.len() {
            return Err(Error::Domain("mask and values differ in size".into()));
        }
        data.mask = mask;
        data.check_rows_observed()?;
        Ok(data)
    }

    pub fn with_groups(mut self, group: Vec<u8>) -> Result<Self> {
        if group.len() != self.n_rows {
            return Err(Error::Domain(format!(
                "expected {} group labels, got {}",
                self.n_rows,
                group.len()
            )));
        }
        self.group = group;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        &self.mask[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn groups(&self) -> &[u8] {
        &self.group
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let k = row * self.n_cols + col;
        self.mask[k].then_some(self.values[k])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub(crate) fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.mask
    }

    pub(crate) fn check_rows_observed(&self) -> Result<()> {
        for i in 0..self.n_rows {
            if !self.mask_row(i).iter().any(|&m| m) {
                return Err(Error::Design(format!("row {i} has no observed cells")));
            }
        }
        Ok(())
    }

    /// Reorders rows; `order[i]` is the source row of output row `i`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        for (dst, &src) in order.iter().enumerate() {
            let d = dst * self.n_cols;
            let s = src * self.n_cols;
            out.values[d..d + self.n_cols].copy_from_slice(&self.values[s..s + self.n_cols]);
            out.mask[d..d + self.n_cols].copy_from_slice(&self.mask[s..s + self.n_cols]);
            out.group[dst] = self.group[src];
        }
        out
    }

    /// Writes one row per case: value columns (missing cells empty), then
    /// `group` and `rep`.
    pub fn write_csv<W: Write>(&self, writer: W, labels: &[String]) -> Result<()> {
        if labels.len() != self.n_cols {
            return Err(Error::Domain(format!(
                "expected {} column labels, got {}",
                self.n_cols,
                labels.len()
            )));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = labels.to_vec();
        header.push("group".into());
        header.push("rep".into());
        w.write_record(&header)?;
        let rep = self.replication_id.to_string();
        for i in 0..self.n_rows {
            let mut record: Vec<String> = self
                .row(i)
                .iter()
                .zip(self.mask_row(i))
                .map(|(v, &m)| if m { v.to_string() } else { String::new() })
                .collect();
            record.push(self.group[i].to_string());
            record.push(rep.clone());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contiguous block assignment of `n` rows to groups `1..=GROUPS`.
pub fn block_groups(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i * GROUPS / n.max(1) + 1) as u8).collect()
}

/// Lower-triangular factor `L` with `L L' = cov`, tolerating exactly constant
/// variables and falling back to diagonal jitter for near-singular matrices.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let active: Vec<usize> = (0..n).filter(|&i| cov[(i, i)] != 0.0).collect();
    for i in 0..n {
        if cov[(i, i)] == 0.0 && (0..n).any(|j| cov[(i, j)] != 0.0) {
            return Err(Error::Covariance(format!(
                "variable {i} has zero variance but nonzero covariances"
            )));
        }
    }
    let sub = DMatrix::from_fn(active.len(), active.len(), |i, j| cov[(active[i], active[j])]);
    let factor = std::iter::once(0.0)
        .chain(JITTER_LADDER)
        .find_map(|jitter| {
            let mut m = sub.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            m.cholesky().map(|c| c.l())
        })
        .ok_or_else(|| {
            Error::Covariance("covariance could not be factorized even with 1e-8 jitter".into())
        })?;
    let mut full = DMatrix::zeros(n, n);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate().take(a + 1) {
            full[(i, j)] = factor[(a, b)];
        }
    }
    Ok(full)
}

/// Draws `n` i.i.d. rows from `N(mean, cov)`.
pub fn sample_mvn(moments: &MomentStructure, n: usize, seed: SeedPlan) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let p = moments.dim();
    let factor = psd_factor(&moments.cov)?;
    let mut rng = seed.rng();
    let mut values = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for row in values.chunks_exact_mut(p) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for (i, out) in row.iter_mut().enumerate() {
            let mut acc = moments.mean[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += factor[(i, j)] * zj;
            }
            *out = acc;
        }
    }
    let mut data = Dataset::complete(p, values)?;
    data.replication_id = u64::from(seed.replication_index);
    Ok(data)
}

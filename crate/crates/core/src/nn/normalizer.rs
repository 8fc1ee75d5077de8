use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

fn default_floor() -> f64 {
    DEFAULT_STD_FLOOR
}

/// Running per-dimension standardizer with output clipping.
///
/// Moments are merged with the parallel (Chan et al.) update, so folding in
/// two batches one after another matches folding in their concatenation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    mean: Vec<f64>,
    var: Vec<f64>,
    count: u64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// Smallest standard deviation used for scaling.
    #[serde(default = "default_floor")]
    pub std_floor: f64,
}

impl Normalizer {
    pub fn new(dim: usize, clip_lo: f64, clip_hi: f64) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
            count: 0,
            clip_lo,
            clip_hi,
            std_floor: DEFAULT_STD_FLOOR,
        }
    }

    pub fn with_std_floor(mut self, floor: f64) -> Self {
        self.std_floor = floor;
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Fold a batch (rows are observations) into the running moments.
    pub fn update(&mut self, batch: ArrayView2<f64>) -> Result<()> {
        check_dim(self.dim(), batch.ncols())?;
        let nb = batch.nrows() as u64;
        if nb == 0 {
            return Ok(());
        }
        let bmean = batch.mean_axis(Axis(0)).expect("non-empty batch");
        let bvar = batch.var_axis(Axis(0), 0.0);
        let na = self.count as f64;
        let nbf = nb as f64;
        let n = na + nbf;
        for k in 0..self.dim() {
            let delta = bmean[k] - self.mean[k];
            let m2 = self.var[k] * na + bvar[k] * nbf + delta * delta * na * nbf / n;
            self.mean[k] += delta * nbf / n;
            self.var[k] = m2 / n;
        }
        self.count += nb;
        Ok(())
    }

    pub fn update_rows(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let d = self.dim();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            check_dim(d, r.len())?;
            flat.extend_from_slice(r);
        }
        let arr = Array2::from_shape_vec((rows.len(), d), flat).expect("consistent rows");
        self.update(arr.view())
    }

    fn scale(&self, k: usize) -> (f64, f64) {
        if self.count == 0 {
            (0.0, 1.0)
        } else {
            (self.mean[k], self.var[k].sqrt().max(self.std_floor))
        }
    }

    /// `clip((x − mean) / max(std, floor), lo, hi)`; identity-then-clip before any update.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(k, v)| {
                let (m, s) = self.scale(k);
                ((v - m) / s).clamp(self.clip_lo, self.clip_hi)
            })
            .collect())
    }

    pub fn apply_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dim(), x.ncols())?;
        let mut out = x.to_owned();
        for (k, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = self.scale(k);
            col.mapv_inplace(|v| ((v - m) / s).clamp(self.clip_lo, self.clip_hi));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use ndarray::arr2;

    use super::*;

    #[test]
    fn fresh_normalizer_clips_only() {
        let n = Normalizer::new(2, -5.0, 5.0);
        assert_eq!(n.apply(&[3.0, -9.0]).unwrap(), vec![3.0, -5.0]);
    }

    #[test]
    fn constant_data_maps_to_zero() {
        let mut n = Normalizer::new(1, -5.0, 5.0);
        n.update(arr2(&[[2.5], [2.5], [2.5]]).view()).unwrap();
        assert_eq!(n.apply(&[2.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_batches_match_concatenation() {
        let a = arr2(&[[1.0, 10.0], [2.0, -3.0], [4.0, 0.5]]);
        let b = arr2(&[[-1.0, 7.0], [0.0, 2.0]]);
        let mut two = Normalizer::new(2, -5.0, 5.0);
        two.update(a.view()).unwrap();
        two.update(b.view()).unwrap();
        let mut one = Normalizer::new(2, -5.0, 5.0);
        let joined = ndarray::concatenate(Axis(0), &[a.view(), b.view()]).unwrap();
        one.update(joined.view()).unwrap();
        for k in 0..2 {
            assert!((one.mean()[k] - two.mean()[k]).abs() < 1e-9);
            assert!((one.var()[k] - two.var()[k]).abs() < 1e-9);
        }
        assert_eq!(one.count(), two.count());
    }

    #[test]
    fn batch_and_single_agree() {
        let mut n = Normalizer::new(2, -5.0, 5.0);
        n.update(arr2(&[[1.0, 2.0], [3.0, 8.0]]).view()).unwrap();
        let x = arr2(&[[0.0, 100.0]]);
        let batch = n.apply_batch(x.view()).unwrap();
        assert_eq!(batch.row(0).to_vec(), n.apply(&[0.0, 100.0]).unwrap());
    }
}

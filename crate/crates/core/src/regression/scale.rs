//! Input standardization and the shared output transform.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column mean with a fixed row-order summation.
pub(crate) fn column_means(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = x.nrows().max(1) as f64;
    let mut sums = vec![0.0; x.ncols()];
    for row in x.rows() {
        for (s, v) in sums.iter_mut().zip(row.iter()) {
            *s += v;
        }
    }
    sums.into_iter().map(|s| s / n).collect()
}

fn column_stds(x: ArrayView2<'_, f64>, means: &[f64]) -> Vec<f64> {
    let n = x.nrows().max(1) as f64;
    let mut sums = vec![0.0; x.ncols()];
    for row in x.rows() {
        for ((s, v), m) in sums.iter_mut().zip(row.iter()).zip(means) {
            *s += (v - m) * (v - m);
        }
    }
    sums.into_iter().map(|s| (s / n).sqrt()).collect()
}

/// Per-feature standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero training variance; their std is set to 1.
    pub constant: Vec<usize>,
}

impl FeatureScaler {
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("cannot fit a scaler on zero rows".into()));
        }
        let mean = column_means(x);
        let mut std = column_stds(x, &mean);
        let mut constant = Vec::new();
        for (j, s) in std.iter_mut().enumerate() {
            if !(*s > 0.0) {
                *s = 1.0;
                constant.push(j);
            }
        }
        Ok(Self { mean, std, constant })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!("{} columns, scaler fitted on {}", x.ncols(), self.mean.len())));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    /// Scaler restricted to a subset of columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            mean: cols.iter().map(|&j| self.mean[j]).collect(),
            std: cols.iter().map(|&j| self.std[j]).collect(),
            constant: cols.iter().enumerate().filter(|(_, j)| self.constant.contains(j)).map(|(i, _)| i).collect(),
        }
    }
}

/// One affine map shared by every output column, so the amplitude ratios
/// between outputs are preserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaler {
    pub mean: f64,
    pub std: f64,
}

impl OutputScaler {
    pub fn fit(y: ArrayView2<'_, f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("cannot fit a scaler on zero rows".into()));
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Self { mean, std })
    }

    pub fn transform(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        y.mapv(|v| (v - self.mean) / self.std)
    }

    pub fn inverse(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        y.mapv(|v| v * self.std + self.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerPair {
    pub input: FeatureScaler,
    pub output: OutputScaler,
}

impl ScalerPair {
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Self> {
        Ok(Self {
            input: FeatureScaler::fit(x)?,
            output: OutputScaler::fit(y)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardized_columns() {
        let x = array![[1.0, 5.0, 2.0], [3.0, 5.0, 4.0], [5.0, 5.0, 9.0]];
        let s = FeatureScaler::fit(x.view()).unwrap();
        assert_eq!(s.constant, vec![1]);
        let z = s.transform(x.view()).unwrap();
        for j in [0, 2] {
            let col = z.column(j);
            assert!(col.sum().abs() < 1e-12);
            assert!((col.mapv(|v| v * v).sum() / 3.0 - 1.0).abs() < 1e-12);
        }
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_round_trip_and_ratio() {
        let y = array![[10.0, 1.0], [20.0, 2.0], [30.0, 3.0]];
        let s = OutputScaler::fit(y.view()).unwrap();
        let z = s.transform(y.view());
        let back = s.inverse(z.view());
        assert!(back.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        // amplitude ratio across outputs is kept
        let ra = (y[[2, 0]] - y[[0, 0]]) / (y[[2, 1]] - y[[0, 1]]);
        let rb = (z[[2, 0]] - z[[0, 0]]) / (z[[2, 1]] - z[[0, 1]]);
        assert!((ra - rb).abs() < 1e-12);
    }

    #[test]
    fn subset_matches_direct_fit() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 0.0, 1.0], [2.0, 2.0, 2.0]];
        let full = FeatureScaler::fit(x.view()).unwrap();
        let sub = FeatureScaler::fit(x.select(ndarray::Axis(1), &[2, 0]).view()).unwrap();
        assert_eq!(full.select(&[2, 0]), sub);
    }
}

//! Brute-force k-nearest-neighbour regression.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::check_finite;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeights {
    Uniform,
    /// Inverse Euclidean distance; exact matches take over.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weights: KnnWeights,
    #[serde(with = "crate::serde_matrix")]
    pub x: Array2<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub y: Array2<f64>,
}

pub fn fit_knn(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, k: usize, weights: KnnWeights) -> Result<KnnModel> {
    check_finite(x, y)?;
    if k == 0 || k > x.nrows() {
        return Err(Error::InvalidSpec(format!("k = {k} with {} training rows", x.nrows())));
    }
    Ok(KnnModel {
        k,
        weights,
        x: x.to_owned(),
        y: y.to_owned(),
    })
}

impl KnnModel {
    /// Indices and distances of the k nearest rows, nearest first; ties go to
    /// the lower index.
    fn neighbours(&self, q: &[f64]) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(d2, i)| (d2.sqrt(), i)).collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.x.ncols() {
            return Err(Error::ShapeMismatch(format!("{} inputs, model expects {}", x.ncols(), self.x.ncols())));
        }
        let d = self.y.ncols();
        let queries: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let rows: Vec<Vec<f64>> = queries
            .par_iter()
            .map(|q| {
                let nb = self.neighbours(q);
                let exact: Vec<usize> = nb.iter().filter(|(dist, _)| *dist == 0.0).map(|&(_, i)| i).collect();
                let weighted: Vec<(f64, usize)> = match self.weights {
                    KnnWeights::Distance if !exact.is_empty() => exact.iter().map(|&i| (1.0, i)).collect(),
                    KnnWeights::Distance => nb.iter().map(|&(dist, i)| (1.0 / dist, i)).collect(),
                    KnnWeights::Uniform => nb.iter().map(|&(_, i)| (1.0, i)).collect(),
                };
                let total: f64 = weighted.iter().map(|(w, _)| w).sum();
                let mut out = vec![0.0; d];
                for (w, i) in weighted {
                    for (o, v) in out.iter_mut().zip(self.y.row(i)) {
                        *o += w * v;
                    }
                }
                out.iter_mut().for_each(|o| *o /= total);
                out
            })
            .collect();
        Ok(Array2::from_shape_vec((x.nrows(), d), rows.into_iter().flatten().collect()).expect("shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    #[test]
    fn exact_match_returns_its_target() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]];
        let y = array![[1.0], [2.0], [3.0], [4.0]];
        let m = fit_knn(x.view(), y.view(), 3, KnnWeights::Distance).unwrap();
        let p = m.predict(array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(p[[0, 0]], 2.0);
    }

    #[test]
    fn all_rows_uniform_is_global_mean() {
        let x = array![[0.0], [1.0], [5.0], [9.0]];
        let y = array![[1.0, 0.0], [2.0, 0.0], [3.0, 4.0], [6.0, 8.0]];
        let m = fit_knn(x.view(), y.view(), 4, KnnWeights::Uniform).unwrap();
        let p = m.predict(array![[100.0]].view()).unwrap();
        assert_eq!(p.row(0).to_vec(), y.mean_axis(Axis(0)).unwrap().to_vec());
    }

    #[test]
    fn clusters() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [10.0, 10.0], [10.1, 10.0], [10.0, 10.1]];
        let y = array![[1.0], [2.0], [3.0], [7.0], [8.0], [9.0]];
        let m = fit_knn(x.view(), y.view(), 3, KnnWeights::Uniform).unwrap();
        let p = m.predict(array![[0.05, 0.05]].view()).unwrap();
        assert!((p[[0, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k_bounds() {
        let x = array![[0.0], [1.0]];
        assert!(fit_knn(x.view(), x.view(), 3, KnnWeights::Uniform).is_err());
        assert!(fit_knn(x.view(), x.view(), 0, KnnWeights::Uniform).is_err());
    }
}

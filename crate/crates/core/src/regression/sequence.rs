//! Sliding sequences of consecutive windows, flattened into one row.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SEQUENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub n_win: usize,
    pub n_feat: usize,
    pub n_out: usize,
}

impl SequencePlan {
    pub fn new(n_win: usize, n_feat: usize, n_out: usize) -> Result<Self> {
        if !(1..=MAX_SEQUENCE).contains(&n_win) {
            return Err(Error::InvalidSpec(format!("sequence length {n_win} must lie in 1..={MAX_SEQUENCE}")));
        }
        Ok(Self { n_win, n_feat, n_out })
    }

    pub fn input_dim(&self) -> usize {
        self.n_win * self.n_feat
    }

    pub fn output_dim(&self) -> usize {
        self.n_win * self.n_out
    }
}

fn stack(m: ArrayView2<'_, f64>, n_win: usize) -> Array2<f64> {
    let rows = m.nrows() + 1 - n_win;
    let width = m.ncols();
    let mut out = Array2::zeros((rows, n_win * width));
    for i in 0..rows {
        for k in 0..n_win {
            out.slice_mut(s![i, k * width..(k + 1) * width]).assign(&m.row(i + k));
        }
    }
    out
}

/// Stride-1 sequences: row i holds rows `i..i + n_win` flattened row-major.
pub fn build_sequences(
    features: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    plan: &SequencePlan,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if features.nrows() != targets.nrows() {
        return Err(Error::Alignment(format!(
            "{} feature rows vs {} target rows",
            features.nrows(),
            targets.nrows()
        )));
    }
    if features.ncols() != plan.n_feat || targets.ncols() != plan.n_out {
        return Err(Error::ShapeMismatch(format!(
            "plan expects {}/{} columns, got {}/{}",
            plan.n_feat,
            plan.n_out,
            features.ncols(),
            targets.ncols()
        )));
    }
    if features.nrows() < plan.n_win {
        return Err(Error::InvalidInput(format!(
            "{} rows cannot form a sequence of {}",
            features.nrows(),
            plan.n_win
        )));
    }
    Ok((stack(features, plan.n_win), stack(targets, plan.n_win)))
}

/// Last `n_out` entries of each sequence prediction.
pub fn reconstruct_series(pred_seq: ArrayView2<'_, f64>, plan: &SequencePlan) -> Result<Array2<f64>> {
    if pred_seq.ncols() != plan.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} prediction columns, plan expects {}",
            pred_seq.ncols(),
            plan.output_dim()
        )));
    }
    let start = plan.output_dim() - plan.n_out;
    Ok(pred_seq.slice(s![.., start..]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| (10 * i + j) as f64)
    }

    #[test]
    fn single_window_is_identity() {
        let f = ramp(6, 3);
        let t = ramp(6, 2);
        let plan = SequencePlan::new(1, 3, 2).unwrap();
        let (xs, ys) = build_sequences(f.view(), t.view(), &plan).unwrap();
        assert_eq!(xs, f);
        assert_eq!(reconstruct_series(ys.view(), &plan).unwrap(), t);
    }

    #[test]
    fn three_window_sequences() {
        let f = ramp(10, 2);
        let t = ramp(10, 1);
        let plan = SequencePlan::new(3, 2, 1).unwrap();
        let (xs, ys) = build_sequences(f.view(), t.view(), &plan).unwrap();
        assert_eq!(xs.dim(), (8, 6));
        assert_eq!(xs.row(0).to_vec(), vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        let back = reconstruct_series(ys.view(), &plan).unwrap();
        assert_eq!(back, t.slice(s![2.., ..]));
    }

    #[test]
    fn errors() {
        let f = ramp(2, 2);
        let plan = SequencePlan::new(3, 2, 2).unwrap();
        assert!(build_sequences(f.view(), f.view(), &plan).is_err());
        assert!(SequencePlan::new(11, 1, 1).is_err());
        assert!(SequencePlan::new(0, 1, 1).is_err());
    }
}

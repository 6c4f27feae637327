//! Ridge (closed form) and Lasso (coordinate descent) with an unpenalized
//! intercept obtained by centering.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scale::column_means;
use crate::error::{Error, Result};
use crate::linalg::{add_ridge, Cholesky};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// p x d weights.
    #[serde(with = "crate::serde_matrix")]
    pub coef: Array2<f64>,
    pub intercept: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.coef.nrows() {
            return Err(Error::ShapeMismatch(format!("{} inputs, model expects {}", x.ncols(), self.coef.nrows())));
        }
        Ok(x.dot(&self.coef) + &Array1::from(self.intercept.clone()))
    }
}

pub(crate) fn check_finite(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Alignment(format!("{} input rows vs {} target rows", x.nrows(), y.nrows())));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training values".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn columns(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// `a^T b`. Every entry depends only on its two columns, so sub-blocks of a
/// product equal the product of the corresponding column subsets exactly.
pub(crate) fn cross_products(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let ca = columns(a);
    let cb = columns(b);
    let rows: Vec<Vec<f64>> = ca.par_iter().map(|u| cb.iter().map(|v| dot(u, v)).collect()).collect();
    Array2::from_shape_vec((ca.len(), cb.len()), rows.into_iter().flatten().collect()).expect("shape")
}

/// `a^T a`, symmetric.
pub(crate) fn gram(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let ca = columns(a);
    let p = ca.len();
    let upper: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| (i..p).map(|j| dot(&ca[i], &ca[j])).collect())
        .collect();
    let mut g = Array2::zeros((p, p));
    for (i, row) in upper.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            g[[i, i + k]] = v;
            g[[i + k, i]] = v;
        }
    }
    g
}

fn centred(x: ArrayView2<'_, f64>, means: &[f64]) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        for (v, m) in row.iter_mut().zip(means) {
            *v -= m;
        }
    }
    out
}

#[derive(Debug, Clone)]
enum RidgeForm {
    /// `(Xc^T Xc + aI) W = Xc^T Yc`
    Primal { gram: Array2<f64>, xty: Array2<f64> },
    /// `W = Xc^T (Xc Xc^T + aI)^-1 Yc`, used when features outnumber rows.
    Dual { kernel: Array2<f64>, xc: Array2<f64>, yc: Array2<f64> },
}

/// Centered normal equations of one training set, reusable across alphas.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
    form: RidgeForm,
}

impl RidgeSystem {
    pub fn new(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Self> {
        if x.ncols() <= x.nrows() {
            Self::primal(x, y)
        } else {
            check_finite(x, y)?;
            let x_mean = column_means(x);
            let y_mean = column_means(y);
            let xc = centred(x, &x_mean);
            let yc = centred(y, &y_mean);
            let kernel = gram(xc.t());
            Ok(Self {
                x_mean,
                y_mean,
                form: RidgeForm::Dual { kernel, xc, yc },
            })
        }
    }

    /// Primal system regardless of shape.
    pub fn primal(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Self> {
        check_finite(x, y)?;
        let x_mean = column_means(x);
        let y_mean = column_means(y);
        let xc = centred(x, &x_mean);
        let yc = centred(y, &y_mean);
        Ok(Self {
            form: RidgeForm::Primal {
                gram: gram(xc.view()),
                xty: cross_products(xc.view(), yc.view()),
            },
            x_mean,
            y_mean,
        })
    }

    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    /// Primal system of a column subset (in the given order). Only valid on
    /// a primal system.
    pub fn subset(&self, cols: &[usize]) -> Result<Self> {
        let RidgeForm::Primal { gram, xty } = &self.form else {
            return Err(Error::InvalidInput("column subsets need a primal ridge system".into()));
        };
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::OutOfRange(format!("column {bad} of {}", self.n_features())));
        }
        Ok(Self {
            x_mean: cols.iter().map(|&c| self.x_mean[c]).collect(),
            y_mean: self.y_mean.clone(),
            form: RidgeForm::Primal {
                gram: gram.select(Axis(0), cols).select(Axis(1), cols),
                xty: xty.select(Axis(0), cols),
            },
        })
    }

    pub fn solve(&self, alpha: f64) -> Result<LinearModel> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidSpec(format!("ridge alpha {alpha} must be finite and nonnegative")));
        }
        let coef = match &self.form {
            RidgeForm::Primal { gram, xty } => Cholesky::factor(add_ridge(gram.view(), alpha).view())?.solve(xty.view())?,
            RidgeForm::Dual { kernel, xc, yc } => {
                let a = Cholesky::factor(add_ridge(kernel.view(), alpha).view())?.solve(yc.view())?;
                xc.t().dot(&a)
            }
        };
        let xm = Array1::from(self.x_mean.clone());
        let intercept = Array1::from(self.y_mean.clone()) - xm.dot(&coef);
        Ok(LinearModel {
            coef,
            intercept: intercept.to_vec(),
        })
    }
}

/// Closed-form ridge with all outputs solved jointly.
pub fn fit_ridge(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, alpha: f64) -> Result<LinearModel> {
    RidgeSystem::new(x, y)?.solve(alpha)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

/// Cyclic coordinate descent on `(1/2n)||y - Xw||^2 + alpha ||w||_1`, one
/// output at a time.
pub fn fit_lasso(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, params: LassoParams) -> Result<LinearModel> {
    check_finite(x, y)?;
    if !(params.alpha >= 0.0 && params.alpha.is_finite()) || !(params.tol >= 0.0) || params.max_iter == 0 {
        return Err(Error::InvalidSpec(format!("invalid lasso parameters {params:?}")));
    }
    let n = x.nrows() as f64;
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let xc = columns(centred(x, &x_mean).view());
    let yc = centred(y, &y_mean);
    let norms: Vec<f64> = xc.iter().map(|c| dot(c, c) / n).collect();
    let p = xc.len();

    let coef_cols: Vec<Vec<f64>> = yc
        .columns()
        .into_iter()
        .map(|c| c.to_vec())
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|mut r| {
            let mut w = vec![0.0; p];
            for _ in 0..params.max_iter {
                let (mut max_delta, mut max_w) = (0.0f64, 0.0f64);
                for j in 0..p {
                    if norms[j] <= 0.0 {
                        continue;
                    }
                    let col = &xc[j];
                    let old = w[j];
                    let rho = dot(col, &r) / n + norms[j] * old;
                    let new = soft_threshold(rho, params.alpha) / norms[j];
                    let delta = new - old;
                    if delta != 0.0 {
                        for (ri, ci) in r.iter_mut().zip(col) {
                            *ri -= delta * ci;
                        }
                        w[j] = new;
                    }
                    max_delta = max_delta.max(delta.abs());
                    max_w = max_w.max(new.abs());
                }
                if max_delta <= params.tol * max_w || max_w == 0.0 {
                    break;
                }
            }
            w
        })
        .collect();

    let d = coef_cols.len();
    let coef = Array2::from_shape_fn((p, d), |(i, k)| coef_cols[k][i]);
    let intercept = Array1::from(y_mean) - Array1::from(x_mean).dot(&coef);
    Ok(LinearModel {
        coef,
        intercept: intercept.to_vec(),
    })
}

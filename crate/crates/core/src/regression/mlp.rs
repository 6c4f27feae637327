//! One-hidden-layer ReLU network trained with Adam on mean squared error.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::check_finite;
use crate::error::{Error, Result};
use crate::seed::{stream_rng, STREAM_MLP};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const VALIDATION_FRACTION: f64 = 0.1;
const MIN_ROWS_FOR_VALIDATION: usize = 10;
/// Relative validation-loss decrease that counts as progress.
const IMPROVEMENT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub lr: f64,
    pub max_iter: usize,
    pub patience: usize,
    pub batch_size: usize,
}

impl MlpParams {
    pub fn new(hidden: usize, lr: f64) -> Self {
        Self {
            hidden,
            lr,
            max_iter: 200,
            patience: 20,
            batch_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// n_in x hidden
    #[serde(with = "crate::serde_matrix")]
    pub w1: Array2<f64>,
    pub b1: Vec<f64>,
    /// hidden x n_out
    #[serde(with = "crate::serde_matrix")]
    pub w2: Array2<f64>,
    pub b2: Vec<f64>,
    pub epochs: usize,
}

/// Gradients in the same layout as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGradient {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied().collect()
    }
}

impl MlpModel {
    /// Uniform weights in `+-sqrt(6 / fan_in)`, zero biases.
    pub fn init(n_in: usize, hidden: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let l1 = (6.0 / n_in.max(1) as f64).sqrt();
        let l2 = (6.0 / hidden.max(1) as f64).sqrt();
        let w1 = Array2::from_shape_fn((n_in, hidden), |_| rng.random_range(-l1..l1));
        let w2 = Array2::from_shape_fn((hidden, n_out), |_| rng.random_range(-l2..l2));
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; n_out],
            epochs: 0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(self.w2.iter()).chain(&self.b2).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!("{} values for {} parameters", p.len(), self.n_params())));
        }
        let mut it = p.iter().copied();
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(self.b2.iter_mut()).for_each(|v| {
            *v = it.next().expect("length checked");
        });
        Ok(())
    }

    fn hidden_pre(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w1) + &Array1::from(self.b1.clone())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.w1.nrows() {
            return Err(Error::ShapeMismatch(format!("{} inputs, model expects {}", x.ncols(), self.w1.nrows())));
        }
        let a = self.hidden_pre(x).mapv(|v| v.max(0.0));
        Ok(a.dot(&self.w2) + &Array1::from(self.b2.clone()))
    }

    /// Loss `(1/2m) sum (yhat - y)^2`.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
        let r = self.predict(x)? - y;
        Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>() / x.nrows().max(1) as f64)
    }

    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, MlpGradient)> {
        if x.ncols() != self.w1.nrows() || y.ncols() != self.w2.ncols() || x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch("inputs do not match the network".into()));
        }
        let m = x.nrows().max(1) as f64;
        let z1 = self.hidden_pre(x);
        let a1 = z1.mapv(|v| v.max(0.0));
        let out = a1.dot(&self.w2) + &Array1::from(self.b2.clone());
        let r = out - y;
        let loss = 0.5 * r.iter().map(|v| v * v).sum::<f64>() / m;
        let d_out = r / m;
        let gw2 = a1.t().dot(&d_out);
        let gb2 = d_out.sum_axis(Axis(0));
        let mut d_hidden = d_out.dot(&self.w2.t());
        d_hidden.zip_mut_with(&z1, |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let gw1 = x.t().dot(&d_hidden);
        let gb1 = d_hidden.sum_axis(Axis(0));
        Ok((
            loss,
            MlpGradient {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            },
        ))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Train with mini-batch Adam. The last 10% of the (already shuffled) rows
/// are held out; training stops after `patience` epochs without relative
/// improvement and the best validation weights are kept.
pub fn fit_mlp(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, params: MlpParams, seed: u64) -> Result<MlpModel> {
    check_finite(x, y)?;
    if params.hidden == 0 || params.batch_size == 0 || params.max_iter == 0 || !(params.lr > 0.0) {
        return Err(Error::InvalidSpec(format!("invalid MLP parameters {params:?}")));
    }
    let n = x.nrows();
    let n_val = if n >= MIN_ROWS_FOR_VALIDATION {
        ((n as f64 * VALIDATION_FRACTION).round() as usize).max(1)
    } else {
        0
    };
    let n_fit = n - n_val;
    let (xt, yt) = (x.slice(s![..n_fit, ..]), y.slice(s![..n_fit, ..]));
    let (xv, yv) = if n_val > 0 {
        (x.slice(s![n_fit.., ..]), y.slice(s![n_fit.., ..]))
    } else {
        (xt, yt)
    };

    let mut rng = stream_rng(seed, STREAM_MLP);
    let mut model = MlpModel::init(x.ncols(), params.hidden, y.ncols(), &mut rng);
    let mut flat = model.params();
    let mut adam = Adam::new(flat.len(), params.lr);
    let mut best = (f64::INFINITY, flat.clone(), 0usize);
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..n_fit).collect();

    for epoch in 1..=params.max_iter {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let bx = xt.select(Axis(0), batch);
            let by = yt.select(Axis(0), batch);
            let (_, g) = model.loss_and_gradient(bx.view(), by.view())?;
            adam.step(&mut flat, &g.flatten());
            model.set_params(&flat)?;
        }
        let val = model.loss(xv, yv)?;
        if !val.is_finite() {
            return Err(Error::TrainingDiverged(format!("loss became {val} at epoch {epoch}")));
        }
        if val < best.0 - IMPROVEMENT_TOL * best.0.abs() {
            stale = 0;
        } else {
            stale += 1;
        }
        if val < best.0 {
            best = (val, flat.clone(), epoch);
        }
        if stale >= params.patience {
            break;
        }
    }
    model.set_params(&best.1)?;
    model.epochs = best.2;
    Ok(model)
}

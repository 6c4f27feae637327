//! Multi-output regressors, hyperparameter search and prediction smoothing.

mod knn;
mod linear;
mod mlp;
mod scale;
mod sequence;

pub use knn::{fit_knn, KnnModel, KnnWeights};
pub use linear::{fit_lasso, fit_ridge, LassoParams, LinearModel, RidgeSystem};
pub use mlp::{fit_mlp, MlpGradient, MlpModel, MlpParams};
pub use scale::{FeatureScaler, OutputScaler, ScalerPair};
pub use sequence::{build_sequences, reconstruct_series, SequencePlan, MAX_SEQUENCE};

use std::fmt;

use log::{debug, warn};
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{design_butterworth, filtfilt_slice, FilterSpec};
use crate::metrics::r2_vw;
use crate::seed::child_seed;

pub const CV_FOLDS: usize = 5;
pub const POST_CUTOFF_HZ: f64 = 5.0;
pub const POST_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Ridge,
    Lasso,
    Knn,
    Mlp,
}

impl RegressorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegressorKind::Ridge => "ridge",
            RegressorKind::Lasso => "lasso",
            RegressorKind::Knn => "knn",
            RegressorKind::Mlp => "mlp",
        }
    }

    /// Default hyperparameter grid.
    pub fn default_grid(self) -> Vec<Hyper> {
        match self {
            RegressorKind::Ridge => [0.001, 0.01, 0.1, 1.0, 10.0].map(|alpha| Hyper::Ridge { alpha }).to_vec(),
            RegressorKind::Lasso => [0.01, 0.1, 1.0, 10.0]
                .map(|alpha| Hyper::Lasso {
                    alpha,
                    max_iter: 10_000,
                    tol: 1e-3,
                })
                .to_vec(),
            RegressorKind::Knn => [10, 30, 50]
                .into_iter()
                .flat_map(|k| [KnnWeights::Uniform, KnnWeights::Distance].map(|weights| Hyper::Knn { k, weights }))
                .collect(),
            RegressorKind::Mlp => [10, 15, 20]
                .into_iter()
                .flat_map(|hidden| {
                    [0.01, 0.1].map(|lr| {
                        let p = MlpParams::new(hidden, lr);
                        Hyper::Mlp {
                            hidden,
                            lr,
                            max_iter: p.max_iter,
                            patience: p.patience,
                            batch_size: p.batch_size,
                        }
                    })
                })
                .collect(),
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(RegressorKind::Ridge),
            "lasso" => Ok(RegressorKind::Lasso),
            "knn" => Ok(RegressorKind::Knn),
            "mlp" => Ok(RegressorKind::Mlp),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Hyper {
    Ridge {
        alpha: f64,
    },
    Lasso {
        alpha: f64,
        #[serde(default = "default_lasso_iter")]
        max_iter: usize,
        #[serde(default = "default_lasso_tol")]
        tol: f64,
    },
    Knn {
        k: usize,
        weights: KnnWeights,
    },
    Mlp {
        hidden: usize,
        lr: f64,
        #[serde(default = "default_mlp_iter")]
        max_iter: usize,
        #[serde(default = "default_patience")]
        patience: usize,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

fn default_lasso_iter() -> usize {
    10_000
}
fn default_lasso_tol() -> f64 {
    1e-3
}
fn default_mlp_iter() -> usize {
    200
}
fn default_patience() -> usize {
    20
}
fn default_batch() -> usize {
    200
}

impl Hyper {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Hyper::Ridge { .. } => RegressorKind::Ridge,
            Hyper::Lasso { .. } => RegressorKind::Lasso,
            Hyper::Knn { .. } => RegressorKind::Knn,
            Hyper::Mlp { .. } => RegressorKind::Mlp,
        }
    }
}

/// A fitted regressor of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Ridge(LinearModel),
    Lasso(LinearModel),
    Knn(KnnModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Model::Ridge(m) | Model::Lasso(m) => m.predict(x),
            Model::Knn(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

/// Fit one grid point.
pub fn fit(hyper: &Hyper, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, seed: u64) -> Result<Model> {
    Ok(match *hyper {
        Hyper::Ridge { alpha } => Model::Ridge(fit_ridge(x, y, alpha)?),
        Hyper::Lasso { alpha, max_iter, tol } => Model::Lasso(fit_lasso(x, y, LassoParams { alpha, max_iter, tol })?),
        Hyper::Knn { k, weights } => Model::Knn(fit_knn(x, y, k, weights)?),
        Hyper::Mlp {
            hidden,
            lr,
            max_iter,
            patience,
            batch_size,
        } => Model::Mlp(fit_mlp(
            x,
            y,
            MlpParams {
                hidden,
                lr,
                max_iter,
                patience,
                batch_size,
            },
            seed,
        )?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub grid: Vec<Hyper>,
    /// `fold_scores[g][f]`: R2_vw of grid point g on fold f; `None` if the fit failed.
    pub fold_scores: Vec<Vec<Option<f64>>>,
    /// Mean over folds; `None` marks a failed grid point (scored as minus infinity).
    pub mean_scores: Vec<Option<f64>>,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRegressor {
    pub hyper: Hyper,
    pub seed: u64,
    pub model: Model,
    pub cv: CvReport,
}

impl FittedRegressor {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.model.predict(x)
    }
}

fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|k| (k * n / folds, (k + 1) * n / folds)).collect()
}

fn without_rows(m: ArrayView2<'_, f64>, lo: usize, hi: usize) -> Array2<f64> {
    concatenate(Axis(0), &[m.slice(s![..lo, ..]), m.slice(s![hi.., ..])]).expect("same width")
}

fn fold_score(pred: Result<Array2<f64>>, y_val: ArrayView2<'_, f64>) -> Option<f64> {
    match pred.and_then(|p| r2_vw(y_val, p.view())) {
        Ok(s) if s.is_finite() => Some(s),
        Ok(_) => None,
        Err(e) => {
            debug!("fold failed: {e}");
            None
        }
    }
}

/// Contiguous k-fold search over `grid` scored by mean out-of-fold R2_vw,
/// then a refit of the winner on all rows. Ties keep the earlier grid point.
pub fn grid_search_cv(
    grid: &[Hyper],
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    folds: usize,
    seed: u64,
) -> Result<FittedRegressor> {
    if grid.is_empty() {
        return Err(Error::InvalidSpec("empty hyperparameter grid".into()));
    }
    if folds < 2 || x.nrows() < folds {
        return Err(Error::InvalidInput(format!("{} rows cannot be split into {folds} folds", x.nrows())));
    }
    linear::check_finite(x, y)?;
    let bounds = fold_bounds(x.nrows(), folds);
    let seeds: Vec<u64> = (0..grid.len()).map(|g| child_seed(seed, g as u64)).collect();

    let fold_scores: Vec<Vec<Option<f64>>> = if grid.iter().all(|h| matches!(h, Hyper::Ridge { .. })) {
        // one factorization-ready system per fold, shared by every alpha
        let per_fold: Vec<Vec<Option<f64>>> = bounds
            .par_iter()
            .map(|&(lo, hi)| {
                let (xv, yv) = (x.slice(s![lo..hi, ..]), y.slice(s![lo..hi, ..]));
                let system = RidgeSystem::new(without_rows(x, lo, hi).view(), without_rows(y, lo, hi).view());
                grid.iter()
                    .map(|h| {
                        let Hyper::Ridge { alpha } = *h else { unreachable!() };
                        let pred = system.as_ref().map_err(|e| Error::Numerical(e.to_string())).and_then(|s| s.solve(alpha)).and_then(|m| m.predict(xv));
                        fold_score(pred, yv)
                    })
                    .collect()
            })
            .collect();
        (0..grid.len()).map(|g| per_fold.iter().map(|f| f[g]).collect()).collect()
    } else {
        grid.par_iter()
            .zip(&seeds)
            .map(|(h, &s)| {
                bounds
                    .iter()
                    .map(|&(lo, hi)| {
                        let (xv, yv) = (x.slice(s![lo..hi, ..]), y.slice(s![lo..hi, ..]));
                        let pred = fit(h, without_rows(x, lo, hi).view(), without_rows(y, lo, hi).view(), s)
                            .and_then(|m| m.predict(xv));
                        fold_score(pred, yv)
                    })
                    .collect()
            })
            .collect()
    };

    let mean_scores: Vec<Option<f64>> = fold_scores
        .iter()
        .map(|f| f.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let mut selected: Option<usize> = None;
    for (g, s) in mean_scores.iter().enumerate() {
        if let Some(s) = s {
            if selected.map_or(true, |b| *s > mean_scores[b].expect("scored")) {
                selected = Some(g);
            }
        }
    }
    let selected = selected.ok_or_else(|| Error::Numerical("every grid point failed cross-validation".into()))?;
    let hyper = grid[selected];
    let model = fit(&hyper, x, y, seeds[selected])?;
    Ok(FittedRegressor {
        hyper,
        seed: seeds[selected],
        model,
        cv: CvReport {
            folds,
            grid: grid.to_vec(),
            fold_scores,
            mean_scores,
            selected,
        },
    })
}

/// Whether smoothing at `rate` would be skipped.
pub fn postprocess_bypassed(pred_rate: f64) -> bool {
    POST_CUTOFF_HZ >= 0.499 * pred_rate
}

/// Zero-phase 5 Hz low-pass per output. Returns the smoothed series and
/// whether the filter was bypassed (cutoff at or above Nyquist, or too few
/// rows for edge padding).
pub fn postprocess(pred: ArrayView2<'_, f64>, pred_rate: f64) -> Result<(Array2<f64>, bool)> {
    if postprocess_bypassed(pred_rate) {
        return Ok((pred.to_owned(), true));
    }
    let coeffs = design_butterworth(&FilterSpec::lowpass(POST_ORDER, POST_CUTOFF_HZ), pred_rate)?;
    if pred.nrows() <= coeffs.pad_len() {
        warn!("{} predictions are too few to smooth; bypassing", pred.nrows());
        return Ok((pred.to_owned(), true));
    }
    let mut out = Array2::zeros(pred.dim());
    for (col, mut dst) in pred.columns().into_iter().zip(out.columns_mut()) {
        let v = filtfilt_slice(&col.to_vec(), &coeffs)?;
        dst.assign(&ndarray::Array1::from(v));
    }
    Ok((out, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn random(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn grids_have_expected_sizes() {
        assert_eq!(RegressorKind::Ridge.default_grid().len(), 5);
        assert_eq!(RegressorKind::Lasso.default_grid().len(), 4);
        assert_eq!(RegressorKind::Knn.default_grid().len(), 6);
        assert_eq!(RegressorKind::Mlp.default_grid().len(), 6);
    }

    #[test]
    fn hyper_json_round_trip_and_strictness() {
        for k in [RegressorKind::Ridge, RegressorKind::Lasso, RegressorKind::Knn, RegressorKind::Mlp] {
            for h in k.default_grid() {
                let s = serde_json::to_string(&h).unwrap();
                assert_eq!(serde_json::from_str::<Hyper>(&s).unwrap(), h);
            }
        }
        let lasso: Hyper = serde_json::from_str(r#"{"kind":"lasso","alpha":0.5}"#).unwrap();
        assert_eq!(lasso, Hyper::Lasso { alpha: 0.5, max_iter: 10_000, tol: 1e-3 });
        assert!(serde_json::from_str::<Hyper>(r#"{"kind":"ridge","alpha":1,"beta":2}"#).is_err());
    }

    #[test]
    fn single_point_grid_equals_direct_fit() {
        let x = random(50, 4, 1);
        let y = random(50, 2, 2);
        let grid = [Hyper::Ridge { alpha: 0.1 }];
        let r = grid_search_cv(&grid, x.view(), y.view(), 5, 0).unwrap();
        assert_eq!(r.model, Model::Ridge(fit_ridge(x.view(), y.view(), 0.1).unwrap()));
        assert_eq!(r.cv.fold_scores[0].len(), 5);
    }

    #[test]
    fn noise_free_linear_data_prefers_smallest_alpha() {
        let x = random(200, 6, 3);
        let w = random(6, 3, 4);
        let y = x.dot(&w);
        let r = grid_search_cv(&RegressorKind::Ridge.default_grid(), x.view(), y.view(), 5, 0).unwrap();
        assert_eq!(r.hyper, Hyper::Ridge { alpha: 0.001 });
    }

    #[test]
    fn generic_path_matches_ridge_fast_path() {
        let x = random(80, 5, 5);
        let y = random(80, 2, 6);
        let grid = RegressorKind::Ridge.default_grid();
        let fast = grid_search_cv(&grid, x.view(), y.view(), 5, 0).unwrap();
        // a trailing non-ridge point forces the generic loop
        let mut mixed = grid.clone();
        mixed.push(Hyper::Knn { k: 10, weights: KnnWeights::Uniform });
        let slow = grid_search_cv(&mixed, x.view(), y.view(), 5, 0).unwrap();
        for g in 0..grid.len() {
            for f in 0..5 {
                let (a, b) = (fast.cv.fold_scores[g][f].unwrap(), slow.cv.fold_scores[g][f].unwrap());
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn failing_point_scores_minus_infinity() {
        let x = random(30, 3, 7);
        let y = random(30, 1, 8);
        // k larger than any training fold fails
        let grid = [Hyper::Knn { k: 29, weights: KnnWeights::Uniform }, Hyper::Ridge { alpha: 1.0 }];
        let r = grid_search_cv(&grid, x.view(), y.view(), 5, 0).unwrap();
        assert_eq!(r.cv.mean_scores[0], None);
        assert_eq!(r.cv.selected, 1);
    }

    #[test]
    fn postprocess_rules() {
        assert!(postprocess_bypassed(10.0));
        assert!(!postprocess_bypassed(100.0));
        let n = 1000;
        let rate = 100.0;
        let sine = Array2::from_shape_fn((n, 1), |(t, _)| (2.0 * PI * t as f64 / rate).sin());
        let (out, bypassed) = postprocess(sine.view(), rate).unwrap();
        assert!(!bypassed);
        let peak = out.slice(s![200..800, 0]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() <= 0.02, "peak {peak}");
        let flat = Array2::from_elem((200, 2), 3.5);
        let (out, _) = postprocess(flat.view(), rate).unwrap();
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-9));
    }
}

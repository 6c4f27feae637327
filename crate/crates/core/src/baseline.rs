//! Baseline feature sets: per-channel RMS, MAV + waveform length, and RMS
//! reduced by PCA or NMF with plateau-based choice of the component count.

use log::warn;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::WindowPlan;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::mld::check_windows;
use crate::seed::{stream_rng, STREAM_NMF};
use crate::signal::SignalMatrix;
use crate::tensor::{ColumnTag, FeatureKind, FeatureTensor};

/// Upper bound on extracted components.
pub const MAX_COMPONENTS: usize = 19;
pub const DEFAULT_PLATEAU_MSE: f64 = 1e-6;

const NMF_MAX_ITER: usize = 500;
const NMF_REL_TOL: f64 = 1e-4;
const NMF_TRANSFORM_ITER: usize = 100;
const NMF_EPS: f64 = 1e-300;

fn per_window<F>(x: &SignalMatrix, windows: &WindowPlan, per_channel: usize, f: F) -> Result<Array2<f64>>
where
    F: Fn(ndarray::ArrayView1<'_, f64>, &mut Vec<f64>) + Sync,
{
    check_windows(x, windows)?;
    let data = x.data();
    let len = windows.length();
    let c = x.n_channels();
    let rows: Vec<Vec<f64>> = windows
        .starts()
        .par_iter()
        .map(|&start| {
            let win = data.slice(s![start..start + len, ..]);
            let mut row = Vec::with_capacity(per_channel * c);
            for col in win.columns() {
                f(col, &mut row);
            }
            row
        })
        .collect();
    Array2::from_shape_vec((windows.count(), per_channel * c), rows.into_iter().flatten().collect())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Per-channel windowed RMS, W x C.
pub fn extract_rms(x: &SignalMatrix, windows: &WindowPlan) -> Result<FeatureTensor> {
    let values = per_window(x, windows, 1, |col, out| {
        // same accumulation order as the block descriptors, so a 1x1 block
        // reproduces these values exactly
        let mut energy = 0.0;
        for &v in col.iter() {
            energy += v * v;
        }
        out.push((energy / col.len() as f64).sqrt());
    })?;
    let columns = (0..x.n_channels()).map(|c| ColumnTag::channel(c, FeatureKind::Rms)).collect();
    FeatureTensor::new(values, columns)
}

/// Per-channel mean absolute value and waveform length, W x 2C laid out
/// `[mav_0, wl_0, mav_1, wl_1, ...]`.
pub fn extract_mav_wl(x: &SignalMatrix, windows: &WindowPlan) -> Result<FeatureTensor> {
    let values = per_window(x, windows, 2, |col, out| {
        let mav = col.iter().map(|v| v.abs()).sum::<f64>() / col.len() as f64;
        let wl: f64 = col.iter().zip(col.iter().skip(1)).map(|(a, b)| (b - a).abs()).sum();
        out.push(mav);
        out.push(wl);
    })?;
    let columns = (0..x.n_channels())
        .flat_map(|c| [ColumnTag::channel(c, FeatureKind::Mav), ColumnTag::channel(c, FeatureKind::Wl)])
        .collect();
    FeatureTensor::new(values, columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionKind {
    Pca,
    Nmf,
}

/// Fitted PCA or NMF basis over C channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionModel {
    pub kind: DecompositionKind,
    pub n_comp: usize,
    /// n_comp x C basis; rows are components.
    #[serde(with = "crate::serde_matrix")]
    pub components: Array2<f64>,
    /// Channel means removed before projection (PCA only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Variance along each component (PCA only), descending.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explained_variance: Vec<f64>,
}

impl DecompositionModel {
    pub fn n_channels(&self) -> usize {
        self.components.ncols()
    }

    /// Map encodings back to channel space.
    pub fn reconstruct(&self, codes: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if codes.ncols() != self.n_comp {
            return Err(Error::ShapeMismatch(format!(
                "{} code columns for {} components",
                codes.ncols(),
                self.n_comp
            )));
        }
        let mut out = codes.dot(&self.components);
        if let Some(mean) = &self.mean {
            out += &Array1::from(mean.clone());
        }
        Ok(out)
    }
}

fn check_components(data: ArrayView2<'_, f64>, n_comp: usize) -> Result<()> {
    let limit = data.nrows().min(data.ncols()).min(MAX_COMPONENTS);
    if n_comp == 0 || n_comp > limit {
        return Err(Error::InvalidSpec(format!(
            "{n_comp} components requested; must lie in 1..={limit} for {}x{} data",
            data.nrows(),
            data.ncols()
        )));
    }
    Ok(())
}

/// Principal components of mean-centred data, largest variance first. Each
/// component is signed so that its largest-magnitude entry is positive.
pub fn fit_pca(rms_train: ArrayView2<'_, f64>, n_comp: usize) -> Result<DecompositionModel> {
    check_components(rms_train, n_comp)?;
    let n = rms_train.nrows();
    let mean = rms_train.mean_axis(Axis(0)).expect("non-empty");
    let centred = &rms_train - &mean;
    let cov = centred.t().dot(&centred) / (n.saturating_sub(1).max(1)) as f64;
    let eig = sym_eigen(cov.view())?;
    let c = rms_train.ncols();
    let mut components = Array2::zeros((n_comp, c));
    for i in 0..n_comp {
        let v = eig.vectors.column(i);
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        components.row_mut(i).assign(&v.mapv(|x| sign * x));
    }
    Ok(DecompositionModel {
        kind: DecompositionKind::Pca,
        n_comp,
        components,
        mean: Some(mean.to_vec()),
        explained_variance: eig.values.iter().take(n_comp).map(|v| v.max(0.0)).collect(),
    })
}

/// Result of an NMF fit, including the training encodings.
#[derive(Debug, Clone)]
pub struct NmfFit {
    pub model: DecompositionModel,
    /// N x n_comp nonnegative encodings of the training rows.
    pub encodings: Array2<f64>,
    /// `0.5 * ||X - WH||_F^2` at initialization and after every update sweep.
    pub objective: Vec<f64>,
}

pub fn fit_nmf(rms_train: ArrayView2<'_, f64>, n_comp: usize, seed: u64) -> Result<DecompositionModel> {
    Ok(fit_nmf_detailed(rms_train, n_comp, seed)?.model)
}

/// Frobenius NMF `X ~ W H` by multiplicative updates from an NNDSVD start
/// whose zero entries are replaced by small seeded random values.
pub fn fit_nmf_detailed(x: ArrayView2<'_, f64>, n_comp: usize, seed: u64) -> Result<NmfFit> {
    check_components(x, n_comp)?;
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput("NMF input must be finite and nonnegative".into()));
    }
    let (mut w, mut h) = nndsvd(x, n_comp, seed)?;
    let mut objective = vec![nmf_objective(x, &w, &h)];
    for _ in 0..NMF_MAX_ITER {
        // H <- H * (W^T X) / (W^T W H)
        let num = w.t().dot(&x);
        let den = w.t().dot(&w).dot(&h);
        h.zip_mut_with(&num, |hv, &n| *hv *= n);
        h.zip_mut_with(&den, |hv, &d| *hv /= d + NMF_EPS);
        // W <- W * (X H^T) / (W H H^T)
        let num = x.dot(&h.t());
        let den = w.dot(&h.dot(&h.t()));
        w.zip_mut_with(&num, |wv, &n| *wv *= n);
        w.zip_mut_with(&den, |wv, &d| *wv /= d + NMF_EPS);

        let prev = *objective.last().expect("seeded");
        let cur = nmf_objective(x, &w, &h);
        objective.push(cur);
        if cur <= 0.0 || (prev - cur) / prev < NMF_REL_TOL {
            break;
        }
    }
    Ok(NmfFit {
        model: DecompositionModel {
            kind: DecompositionKind::Nmf,
            n_comp,
            components: h,
            mean: None,
            explained_variance: Vec::new(),
        },
        encodings: w,
        objective,
    })
}

fn nmf_objective(x: ArrayView2<'_, f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let r = &x - &w.dot(h);
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn nndsvd(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, c) = x.dim();
    // right singular vectors from the Gram matrix; u = X v / s
    let eig = sym_eigen(x.t().dot(&x).view())?;
    let mut w = Array2::<f64>::zeros((n, k));
    let mut h = Array2::<f64>::zeros((k, c));
    for j in 0..k {
        let s2 = eig.values[j];
        if !(s2 > 0.0) {
            continue;
        }
        let sv = s2.sqrt();
        let v = eig.vectors.column(j).to_owned();
        let u = x.dot(&v) / sv;
        if j == 0 {
            w.column_mut(0).assign(&u.mapv(|a| sv.sqrt() * a.abs()));
            h.row_mut(0).assign(&v.mapv(|a| sv.sqrt() * a.abs()));
            continue;
        }
        let pos = |a: &Array1<f64>| a.mapv(|e| e.max(0.0));
        let neg = |a: &Array1<f64>| a.mapv(|e| (-e).max(0.0));
        let norm = |a: &Array1<f64>| a.dot(a).sqrt();
        let (up, un, vp, vn) = (pos(&u), neg(&u), pos(&v), neg(&v));
        let (nup, nun, nvp, nvn) = (norm(&up), norm(&un), norm(&vp), norm(&vn));
        let (uu, vv, sigma) = if nup * nvp >= nun * nvn {
            (up / nup.max(f64::MIN_POSITIVE), vp / nvp.max(f64::MIN_POSITIVE), nup * nvp)
        } else {
            (un / nun.max(f64::MIN_POSITIVE), vn / nvn.max(f64::MIN_POSITIVE), nun * nvn)
        };
        let lbd = (sv * sigma).sqrt();
        w.column_mut(j).assign(&(uu * lbd));
        h.row_mut(j).assign(&(vv * lbd));
    }
    let fill = 1e-2 * x.mean().unwrap_or(0.0);
    let mut rng = stream_rng(seed, STREAM_NMF);
    for v in w.iter_mut().chain(h.iter_mut()) {
        if *v < 1e-12 {
            *v = if fill > 0.0 { rng.random_range(0.0..fill) } else { 0.0 };
        }
    }
    Ok((w, h))
}

/// Encode rows with a fitted model: centred projection (PCA) or
/// multiplicative updates of the encodings with the basis held fixed (NMF).
pub fn transform(model: &DecompositionModel, rms: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if rms.ncols() != model.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} channels, model expects {}",
            rms.ncols(),
            model.n_channels()
        )));
    }
    match model.kind {
        DecompositionKind::Pca => {
            let mean = Array1::from(model.mean.clone().unwrap_or_else(|| vec![0.0; rms.ncols()]));
            Ok((&rms - &mean).dot(&model.components.t()))
        }
        DecompositionKind::Nmf => {
            if rms.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidInput("NMF transform input must be nonnegative".into()));
            }
            let h = &model.components;
            let k = model.n_comp;
            let start = (rms.mean().unwrap_or(0.0).max(0.0) / k as f64).sqrt();
            let mut w = Array2::from_elem((rms.nrows(), k), start.max(1e-12));
            let hht = h.dot(&h.t());
            let xht = rms.dot(&h.t());
            let mut prev = nmf_objective(rms, &w, h);
            for _ in 0..NMF_TRANSFORM_ITER {
                let den = w.dot(&hht);
                w.zip_mut_with(&xht, |wv, &n| *wv *= n);
                w.zip_mut_with(&den, |wv, &d| *wv /= d + NMF_EPS);
                let cur = nmf_objective(rms, &w, h);
                if cur <= 0.0 || (prev - cur) / prev < NMF_REL_TOL {
                    break;
                }
                prev = cur;
            }
            Ok(w)
        }
    }
}

/// Mean over channels of `1 - SSE_c / SST_c`. Constant channels count as 1
/// when reconstructed exactly and are skipped otherwise.
pub fn r2_var(original: ArrayView2<'_, f64>, reconstructed: ArrayView2<'_, f64>) -> Result<f64> {
    if original.dim() != reconstructed.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            original.dim(),
            reconstructed.dim()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (xo, xr) in original.columns().into_iter().zip(reconstructed.columns()) {
        let mean = xo.mean().unwrap_or(0.0);
        let sst: f64 = xo.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sse: f64 = xo.iter().zip(xr.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if sst > 0.0 {
            total += 1.0 - sse / sst;
            counted += 1;
        } else if sse == 0.0 {
            total += 1.0;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::InvalidInput("no channel has usable variance".into()));
    }
    Ok(total / counted as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSelection {
    pub n_star: usize,
    /// R2_var for 1..=curve.len() components.
    pub curve: Vec<f64>,
    /// No suffix met the threshold; `n_star` fell back to the largest count.
    pub fallback: bool,
}

/// First point whose suffix of the curve is fit by a straight line with
/// mean squared residual below `threshold`. Suffixes need at least three
/// points, since one or two points are always fit exactly. Returns a 1-based
/// component count.
pub fn plateau_point(curve: &[f64], threshold: f64) -> Option<usize> {
    let n = curve.len();
    (0..n.saturating_sub(2)).find(|&i| line_fit_mse(&curve[i..], i) < threshold).map(|i| i + 1)
}

fn line_fit_mse(ys: &[f64], offset: usize) -> f64 {
    let n = ys.len() as f64;
    let xs: Vec<f64> = (0..ys.len()).map(|i| (offset + i + 1) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / n
}

/// Build the R2_var-vs-components curve (up to 19 components) and pick the
/// plateau onset.
pub fn select_components(
    rms_train: ArrayView2<'_, f64>,
    kind: DecompositionKind,
    mse_threshold: f64,
    seed: u64,
) -> Result<ComponentSelection> {
    if !(mse_threshold > 0.0) {
        return Err(Error::InvalidSpec(format!("plateau threshold {mse_threshold} must be positive")));
    }
    let n_max = rms_train.nrows().min(rms_train.ncols()).min(MAX_COMPONENTS);
    if n_max == 0 {
        return Err(Error::InvalidInput("empty RMS matrix".into()));
    }
    let curve = match kind {
        DecompositionKind::Pca => {
            let full = fit_pca(rms_train, n_max)?;
            let codes = transform(&full, rms_train)?;
            (1..=n_max)
                .map(|n| {
                    let sub = DecompositionModel {
                        n_comp: n,
                        components: full.components.slice(s![..n, ..]).to_owned(),
                        ..full.clone()
                    };
                    r2_var(rms_train, sub.reconstruct(codes.slice(s![.., ..n]))?.view())
                })
                .collect::<Result<Vec<_>>>()?
        }
        DecompositionKind::Nmf => (1..=n_max)
            .into_par_iter()
            .map(|n| {
                let fit = fit_nmf_detailed(rms_train, n, seed)?;
                r2_var(rms_train, fit.encodings.dot(&fit.model.components).view())
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let (n_star, fallback) = match plateau_point(&curve, mse_threshold) {
        Some(n) => (n, false),
        None => {
            warn!("no plateau below MSE {mse_threshold:e}; using {n_max} components");
            (n_max, true)
        }
    };
    Ok(ComponentSelection {
        n_star,
        curve,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::plan_windows;
    use crate::signal::default_grids;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn signal_of(f: impl Fn(usize, usize) -> f64, n: usize, fs: f64) -> SignalMatrix {
        SignalMatrix::new(Array2::from_shape_fn((n, 128), |(t, c)| f(t, c)), fs, default_grids()).unwrap()
    }

    #[test]
    fn rms_of_constant_and_sinusoid() {
        let fs = 2000.0;
        let x = signal_of(|t, c| if c == 5 { -3.0 } else { (2.0 * PI * 100.0 * t as f64 / fs).sin() }, 4000, fs);
        let wp = plan_windows(4000, 2000, 0).unwrap();
        let r = extract_rms(&x, &wp).unwrap();
        assert_eq!(r.n_cols(), 128);
        assert!(r.values().column(5).iter().all(|&v| v == 3.0));
        assert!((r.values()[[0, 0]] - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01 * std::f64::consts::FRAC_1_SQRT_2);
    }

    #[test]
    fn mav_wl_examples() {
        let fs = 2000.0;
        let l = 2000;
        let x = signal_of(
            |t, c| match c {
                0 => 4.0,
                1 => if t % 2 == 0 { 1.0 } else { -1.0 },
                _ => (2.0 * PI * 100.0 * t as f64 / fs).sin(),
            },
            l,
            fs,
        );
        let wp = plan_windows(l, l, 0).unwrap();
        let f = extract_mav_wl(&x, &wp).unwrap();
        let v = f.values();
        assert_eq!((v[[0, 0]], v[[0, 1]]), (4.0, 0.0));
        assert_eq!((v[[0, 2]], v[[0, 3]]), (1.0, 2.0 * (l as f64 - 1.0)));
        assert!((v[[0, 4]] - 2.0 / PI).abs() < 0.01 * 2.0 / PI);
        assert_eq!(f.columns()[3], ColumnTag::channel(1, FeatureKind::Wl));
    }

    fn random_matrix(n: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, c), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn pca_line_data_single_component() {
        let x = Array2::from_shape_fn((50, 4), |(i, j)| (i as f64) * (j as f64 + 1.0) + 3.0);
        let m = fit_pca(x.view(), 2).unwrap();
        let total: f64 = m.explained_variance.iter().sum();
        assert!(m.explained_variance[1] <= 1e-10 * total);
        assert!(m.components.row(0).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn pca_full_rank_round_trip_and_mean_row() {
        let x = random_matrix(40, 6, 9);
        let m = fit_pca(x.view(), 6).unwrap();
        let codes = transform(&m, x.view()).unwrap();
        let back = m.reconstruct(codes.view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let mean = x.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let z = transform(&m, mean.view()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pca_isotropic_eigenvalues_balanced() {
        let x = random_matrix(10_000, 5, 21);
        let m = fit_pca(x.view(), 5).unwrap();
        let ev = &m.explained_variance;
        assert!(ev[0] / ev[4] <= 1.2, "{ev:?}");
    }

    #[test]
    fn pca_component_limits() {
        let x = random_matrix(10, 30, 1);
        assert!(fit_pca(x.view(), 11).is_err());
        assert!(fit_pca(x.view(), 0).is_err());
        let wide = random_matrix(100, 30, 1);
        assert!(fit_pca(wide.view(), 20).is_err());
    }

    #[test]
    fn r2_var_examples() {
        let x = random_matrix(30, 4, 2);
        assert_abs_diff_eq!(r2_var(x.view(), x.view()).unwrap(), 1.0);
        let mean = x.mean_axis(Axis(0)).unwrap();
        let flat = Array2::from_shape_fn(x.dim(), |(_, j)| mean[j]);
        assert_abs_diff_eq!(r2_var(x.view(), flat.view()).unwrap(), 0.0, epsilon = 1e-12);
        let mut half = x.clone();
        for j in 2..4 {
            half.column_mut(j).fill(mean[j]);
        }
        assert_abs_diff_eq!(r2_var(x.view(), half.view()).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn r2_var_constant_channel_rules() {
        let mut x = random_matrix(20, 2, 4);
        x.column_mut(1).fill(2.0);
        assert_abs_diff_eq!(r2_var(x.view(), x.view()).unwrap(), 1.0);
        let mut off = x.clone();
        off[[0, 1]] = 2.5;
        // constant channel misreconstructed is excluded, leaving the perfect one
        assert_abs_diff_eq!(r2_var(x.view(), off.view()).unwrap(), 1.0);
    }

    #[test]
    fn plateau_on_linear_curve_is_first_point() {
        let curve: Vec<f64> = (1..=19).map(|n| 0.05 * n as f64).collect();
        assert_eq!(plateau_point(&curve, 1e-6), Some(1));
        let bent = [0.2, 0.5, 0.9, 0.95, 0.99, 1.0, 1.0, 1.0];
        assert_eq!(plateau_point(&bent, 1e-6), Some(6));
        assert_eq!(plateau_point(&[0.1, 0.9], 1e-6), None);
    }

    fn nonneg_rank(n: usize, c: usize, rank: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_fn((n, rank), |_| rng.random_range(0.1..1.0));
        let h = Array2::from_shape_fn((rank, c), |_| rng.random_range(0.1..1.0));
        w.dot(&h)
    }

    #[test]
    fn nmf_rank_one_exact() {
        let x = nonneg_rank(60, 8, 1, 5);
        let fit = fit_nmf_detailed(x.view(), 1, 3).unwrap();
        let rec = fit.encodings.dot(&fit.model.components);
        let rel = (&x - &rec).mapv(|v| v * v).sum().sqrt() / x.mapv(|v| v * v).sum().sqrt();
        assert!(rel <= 1e-3, "relative error {rel}");
    }

    #[test]
    fn nmf_objective_monotone_and_nonnegative() {
        let x = nonneg_rank(80, 12, 4, 8).mapv(|v| v + 0.05);
        let fit = fit_nmf_detailed(x.view(), 3, 17).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        assert!(fit.model.components.iter().all(|&v| v >= 0.0));
        assert!(fit.encodings.iter().all(|&v| v >= 0.0));
        let codes = transform(&fit.model, x.view()).unwrap();
        assert!(codes.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nmf_is_seed_deterministic() {
        let x = nonneg_rank(50, 10, 3, 1);
        let a = fit_nmf(x.view(), 3, 99).unwrap();
        let b = fit_nmf(x.view(), 3, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nmf_rejects_negative_input() {
        let mut x = nonneg_rank(10, 4, 1, 1);
        x[[2, 2]] = -0.1;
        assert!(matches!(fit_nmf(x.view(), 1, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn transform_shape_mismatch() {
        let x = nonneg_rank(30, 6, 2, 2);
        let m = fit_pca(x.view(), 2).unwrap();
        assert!(matches!(transform(&m, Array2::zeros((3, 5)).view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn select_rank_three_pca() {
        let x = nonneg_rank(200, 24, 3, 12);
        let sel = select_components(x.view(), DecompositionKind::Pca, DEFAULT_PLATEAU_MSE, 0).unwrap();
        assert_eq!(sel.n_star, 3);
        assert_eq!(sel.curve.len(), 19);
        assert!(!sel.fallback);
    }
}

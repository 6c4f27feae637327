//! Multichannel linear descriptors per (window, block): effective field
//! strength, field-strength variation rate and spatial complexity.

use std::f64::consts::PI;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{BlockPlan, WindowPlan};
use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::signal::SignalMatrix;
use crate::tensor::{ColumnTag, FeatureKind, FeatureTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MldTriple {
    pub sigma: f64,
    pub phi: f64,
    pub omega: f64,
}

/// Pooled RMS over every entry of an L x K segment.
pub fn sigma(seg: ArrayView2<'_, f64>) -> f64 {
    let n = seg.len();
    if n == 0 {
        return 0.0;
    }
    (seg.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Generalized frequency in Hz: RMS of the forward-difference derivative over
/// RMS of the signal, divided by 2*pi. Zero-energy segments give 0.
pub fn phi(seg: ArrayView2<'_, f64>, fs: f64) -> f64 {
    let energy: f64 = seg.iter().map(|v| v * v).sum();
    let diff = diff_energy(seg);
    phi_from_energies(energy, diff, fs)
}

fn diff_energy(seg: ArrayView2<'_, f64>) -> f64 {
    if seg.nrows() < 2 {
        return 0.0;
    }
    let a = seg.slice(s![1.., ..]);
    let b = seg.slice(s![..-1, ..]);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn phi_from_energies(energy: f64, diff_energy: f64, fs: f64) -> f64 {
    if energy <= 0.0 {
        return 0.0;
    }
    // (dx/dt)^2 = (dx * fs)^2
    (diff_energy * fs * fs / energy).sqrt() / (2.0 * PI)
}

/// Second-moment matrix `X^T X / L` (no mean removal).
pub fn block_covariance(seg: ArrayView2<'_, f64>) -> Array2<f64> {
    let l = seg.nrows().max(1) as f64;
    seg.t().dot(&seg) / l
}

/// Exponential of the Shannon entropy of the normalized eigenvalues of
/// [`block_covariance`]; 1 for a single spatial mode, K for a flat spectrum.
pub fn omega(seg: ArrayView2<'_, f64>) -> Result<f64> {
    omega_from_covariance(block_covariance(seg).view())
}

pub fn omega_from_covariance(cov: ArrayView2<'_, f64>) -> Result<f64> {
    let eig = sym_eigenvalues(cov)?;
    Ok(omega_from_eigenvalues(&eig))
}

/// Omega from raw eigenvalues; negatives are clamped to 0, `0 log 0 = 0`.
pub fn omega_from_eigenvalues(eigenvalues: &[f64]) -> f64 {
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return 1.0;
    }
    let entropy: f64 = eigenvalues
        .iter()
        .map(|l| l.max(0.0) / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    entropy.exp()
}

/// All three descriptors of one segment.
pub fn descriptors(seg: ArrayView2<'_, f64>, fs: f64) -> Result<MldTriple> {
    Ok(MldTriple {
        sigma: sigma(seg),
        phi: phi(seg, fs),
        omega: omega(seg)?,
    })
}

/// Descriptors of the columns `channels` of `window` without copying the segment.
fn block_descriptors(window: ArrayView2<'_, f64>, channels: &[usize], fs: f64) -> Result<MldTriple> {
    let k = channels.len();
    let l = window.nrows();
    let mut cov = Array2::<f64>::zeros((k, k));
    let mut diff = 0.0;
    let mut prev: Option<ndarray::ArrayView1<'_, f64>> = None;
    let mut vals = vec![0.0; k];
    for row in window.rows() {
        for (v, &c) in vals.iter_mut().zip(channels) {
            *v = row[c];
        }
        for i in 0..k {
            let vi = vals[i];
            for j in i..k {
                cov[[i, j]] += vi * vals[j];
            }
        }
        if let Some(p) = prev {
            for (v, &c) in vals.iter().zip(channels) {
                let d = v - p[c];
                diff += d * d;
            }
        }
        prev = Some(row);
    }
    let energy: f64 = (0..k).map(|i| cov[[i, i]]).sum();
    for i in 0..k {
        for j in i..k {
            cov[[i, j]] /= l as f64;
            cov[[j, i]] = cov[[i, j]];
        }
    }
    Ok(MldTriple {
        sigma: (energy / (k * l) as f64).sqrt(),
        phi: phi_from_energies(energy, diff, fs),
        omega: omega_from_covariance(cov.view())?,
    })
}

/// W x 3n_B tensor laid out `[sigma_b0, phi_b0, omega_b0, sigma_b1, ...]`.
pub fn extract_mld_bfm(x: &SignalMatrix, blocks: &BlockPlan, windows: &WindowPlan) -> Result<FeatureTensor> {
    check_plans(x, blocks, windows)?;
    let data = x.data();
    let fs = x.fs();
    let len = windows.length();
    let rows: Vec<Vec<f64>> = windows
        .starts()
        .par_iter()
        .map(|&start| {
            let win = data.slice(s![start..start + len, ..]);
            let mut row = Vec::with_capacity(3 * blocks.n_blocks());
            for b in &blocks.blocks {
                let t = block_descriptors(win, &b.channels, fs)?;
                row.extend([t.sigma, t.phi, t.omega]);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let n_cols = 3 * blocks.n_blocks();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((windows.count(), n_cols), flat)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let columns = blocks
        .blocks
        .iter()
        .flat_map(|b| {
            [FeatureKind::Sigma, FeatureKind::Phi, FeatureKind::Omega].map(|k| ColumnTag::block(b.id, k))
        })
        .collect();
    FeatureTensor::new(values, columns)
}

pub(crate) fn check_plans(x: &SignalMatrix, blocks: &BlockPlan, windows: &WindowPlan) -> Result<()> {
    check_windows(x, windows)?;
    if blocks.grids.as_slice() != x.grids() {
        return Err(Error::InvalidSpec("block plan was built for a different grid layout".into()));
    }
    Ok(())
}

pub(crate) fn check_windows(x: &SignalMatrix, windows: &WindowPlan) -> Result<()> {
    if let Some(&last) = windows.starts().last() {
        if last + windows.length() > x.n_samples() {
            return Err(Error::InvalidSpec(format!(
                "window plan needs {} samples, recording has {}",
                last + windows.length(),
                x.n_samples()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{plan_blocks, plan_windows};
    use crate::signal::default_grids;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn sigma_examples() {
        assert_abs_diff_eq!(sigma(Array2::from_elem((10, 3), -2.5).view()), 2.5);
        assert_abs_diff_eq!(sigma(array![[3.0, 4.0], [0.0, 0.0]].view()), 2.5, epsilon = 1e-15);
        let single = array![[1.0], [-1.0], [2.0]];
        assert_abs_diff_eq!(sigma(single.view()), 2.0f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn phi_of_sinusoid_tracks_frequency() {
        let fs = 2052.52;
        let l = (fs * 0.15f64).round() as usize;
        let seg = Array2::from_shape_fn((l, 2), |(t, k)| {
            (2.0 * PI * 50.0 * t as f64 / fs + k as f64).sin() * (1.0 + k as f64)
        });
        let p = phi(seg.view(), fs);
        assert!((p - 50.0).abs() / 50.0 < 0.01, "phi = {p}");
        let scaled = seg.mapv(|v| 7.0 * v);
        assert_abs_diff_eq!(phi(scaled.view(), fs), p, epsilon = 1e-9 * p);
    }

    #[test]
    fn silent_segment_conventions() {
        let z = Array2::<f64>::zeros((20, 4));
        let t = descriptors(z.view(), 1000.0).unwrap();
        assert_eq!(t, MldTriple { sigma: 0.0, phi: 0.0, omega: 1.0 });
    }

    #[test]
    fn covariance_examples() {
        let c = block_covariance(array![[1.0, 0.0], [0.0, 1.0]].view());
        assert_eq!(c, array![[0.5, 0.0], [0.0, 0.5]]);
        // identical columns give a rank-1 matrix
        let same = Array2::from_shape_fn((6, 3), |(t, _)| t as f64 - 2.0);
        let vals = sym_eigenvalues(block_covariance(same.view()).view()).unwrap();
        assert!(vals[1].abs() < 1e-12 * vals[0] && vals[2].abs() < 1e-12 * vals[0]);
    }

    #[test]
    fn omega_examples() {
        let same = Array2::from_shape_fn((50, 4), |(t, _)| (t as f64 * 0.3).sin());
        assert_abs_diff_eq!(omega(same.view()).unwrap(), 1.0, epsilon = 1e-9);
        // orthogonal columns of equal energy: covariance = I
        let eye = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 2.0 } else { 0.0 });
        assert_abs_diff_eq!(omega(eye.view()).unwrap(), 4.0, epsilon = 1e-12);
        // eigenvalues (0.75, 0.25)
        assert_abs_diff_eq!(omega_from_eigenvalues(&[0.75, 0.25]), 1.754_765_350_603_323_2, epsilon = 1e-12);
        assert_abs_diff_eq!(omega_from_eigenvalues(&[0.75, 0.25, -1e-18]), 1.754_765_350_603_323_2, epsilon = 1e-12);
    }

    #[test]
    fn fused_path_matches_segment_path() {
        let x = Array2::from_shape_fn((40, 6), |(t, c)| ((t * 7 + c * 13) % 11) as f64 - 5.0 + 0.1 * c as f64);
        let channels = [4, 1, 5];
        let seg = x.select(ndarray::Axis(1), &channels);
        let fused = block_descriptors(x.view(), &channels, 500.0).unwrap();
        let direct = descriptors(seg.view(), 500.0).unwrap();
        assert_abs_diff_eq!(fused.sigma, direct.sigma, epsilon = 1e-12);
        assert_abs_diff_eq!(fused.phi, direct.phi, epsilon = 1e-10);
        assert_abs_diff_eq!(fused.omega, direct.omega, epsilon = 1e-10);
    }

    fn ramp_signal(n: usize) -> SignalMatrix {
        let data = Array2::from_shape_fn((n, 128), |(t, c)| ((t * (c + 3)) % 17) as f64 - 8.0);
        SignalMatrix::new(data, 1000.0, default_grids()).unwrap()
    }

    #[test]
    fn tensor_widths() {
        let x = ramp_signal(600);
        let wp = plan_windows(600, 150, 50).unwrap();
        let f8 = extract_mld_bfm(&x, &plan_blocks(x.grids(), 8, 1).unwrap(), &wp).unwrap();
        assert_eq!((f8.n_rows(), f8.n_cols()), (5, 6));
        let f2 = extract_mld_bfm(&x, &plan_blocks(x.grids(), 2, 1).unwrap(), &wp).unwrap();
        assert_eq!(f2.n_cols(), 294);
        assert_eq!(f2.columns()[4], ColumnTag::block(1, FeatureKind::Phi));
    }

    #[test]
    fn unit_blocks_degenerate_to_channel_rms() {
        let x = ramp_signal(400);
        let wp = plan_windows(400, 100, 20).unwrap();
        let f = extract_mld_bfm(&x, &plan_blocks(x.grids(), 1, 1).unwrap(), &wp).unwrap();
        for (w, &start) in wp.starts().iter().enumerate() {
            for ch in 0..128 {
                let seg = x.data().slice(s![start..start + 100, ch..ch + 1]).to_owned();
                assert_abs_diff_eq!(f.values()[[w, 3 * ch]], sigma(seg.view()), epsilon = 1e-12);
                assert_eq!(f.values()[[w, 3 * ch + 2]], 1.0);
            }
        }
    }

    #[test]
    fn plan_mismatch_rejected() {
        let x = ramp_signal(400);
        let wp = plan_windows(500, 100, 20).unwrap();
        let bp = plan_blocks(x.grids(), 2, 1).unwrap();
        assert!(extract_mld_bfm(&x, &bp, &wp).is_err());
    }
}

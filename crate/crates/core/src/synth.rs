//! Seeded synthetic HD-sEMG recordings with matching finger kinematics.
//!
//! Every DoF drives a Gaussian spatial source per grid. The flexor grid
//! follows the normalized angle and the extensor grid its complement. Each
//! source is split into motor-unit pools recruited in turn as drive rises;
//! later pools sit slightly off-centre and fire in a higher band. A slow
//! per-grid gain drift mimics changing skin-electrode impedance.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{design_butterworth, filtfilt_slice, FilterSpec};
use crate::seed::{child_seed, stream_rng, STREAM_SYNTH};
use crate::signal::{default_grids, GridLayout, SignalMatrix, Trajectory, FINGERS};

/// Grid index of the extensor array in [`default_grids`].
pub const EXTENSOR_GRID: usize = 0;
pub const FLEXOR_GRID: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPattern {
    pub name: String,
    /// Indices into the finger list.
    pub active: Vec<usize>,
}

/// The eight movement patterns of the recording protocol.
pub fn default_tasks() -> Vec<TaskPattern> {
    let t = |name: &str, active: &[usize]| TaskPattern {
        name: name.to_string(),
        active: active.to_vec(),
    };
    vec![
        t("index", &[1]),
        t("middle", &[2]),
        t("ring_little", &[3, 4]),
        t("thumb", &[0]),
        t("pinch_index", &[0, 1]),
        t("pinch_middle", &[0, 2]),
        t("tripod", &[0, 1, 2]),
        t("grasp", &[0, 1, 2, 3, 4]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub fs: f64,
    pub fs_kin: f64,
    pub tasks: Vec<TaskPattern>,
    pub movement_hz: f64,
    pub duration_s: f64,
    /// Peak flexion per finger, degrees.
    pub amplitude_deg: [f64; 5],
    /// Peak of the slow drift on inactive fingers, degrees.
    pub coupling_deg: f64,
    /// Source centres `[grid][finger] = (row, col)` in electrode units, 0-based.
    pub centers: Vec<[[f64; 2]; 5]>,
    /// Gaussian footprint width, electrodes.
    pub spread: f64,
    pub gain: f64,
    /// Carrier band of each recruitment pool, in recruitment order.
    pub pool_bands_hz: Vec<[f64; 2]>,
    /// Distance of each later pool from its source centre, electrodes.
    pub pool_offset: f64,
    /// Standard deviation of the per-grid log-gain drift.
    pub impedance_drift: f64,
    pub noise: f64,
    pub powerline: f64,
    pub powerline_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fs: 2052.52,
            fs_kin: 100.0,
            tasks: default_tasks(),
            movement_hz: 0.5,
            duration_s: 45.0,
            amplitude_deg: [90.0; 5],
            coupling_deg: 3.0,
            centers: vec![
                // extensor: thumb, index, middle, ring, little
                [[1.0, 6.0], [2.0, 4.5], [3.0, 3.0], [4.5, 2.0], [5.5, 1.0]],
                // flexor
                [[1.5, 1.0], [2.0, 2.5], [3.0, 4.0], [4.0, 5.5], [5.0, 6.5]],
            ],
            spread: 1.5,
            gain: 1.0,
            pool_bands_hz: vec![[20.0, 150.0], [40.0, 300.0], [80.0, 450.0]],
            pool_offset: 1.0,
            impedance_drift: 0.3,
            noise: 0.1,
            powerline: 0.5,
            powerline_hz: 60.0,
        }
    }
}

impl SynthConfig {
    pub fn grids(&self) -> Vec<GridLayout> {
        default_grids()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.fs > 0.0 && self.fs_kin > 0.0 && self.movement_hz > 0.0 && self.duration_s > 0.0) {
            return bad("rates and duration must be positive".into());
        }
        let amps = self.amplitude_deg.iter().chain([
            &self.coupling_deg,
            &self.gain,
            &self.noise,
            &self.powerline,
            &self.pool_offset,
            &self.impedance_drift,
        ]);
        if amps.clone().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("amplitudes must be finite and nonnegative".into());
        }
        if !(self.spread > 0.0) {
            return bad("spread must be positive".into());
        }
        let grids = self.grids();
        if self.centers.len() != grids.len() {
            return bad(format!("{} centre sets for {} grids", self.centers.len(), grids.len()));
        }
        for (g, set) in grids.iter().zip(&self.centers) {
            for [r, c] in set {
                if !(0.0..=(g.n_rows - 1) as f64).contains(r) || !(0.0..=(g.n_cols - 1) as f64).contains(c) {
                    return bad(format!("source centre ({r}, {c}) outside grid {}", g.name));
                }
            }
        }
        if self.pool_bands_hz.is_empty() {
            return bad("at least one recruitment pool is required".into());
        }
        for &[lo, hi] in &self.pool_bands_hz {
            if !(lo > 0.0 && lo < hi && hi < self.fs / 2.0) {
                return bad(format!("carrier band {lo}-{hi} Hz invalid at {} Hz", self.fs));
            }
        }
        if self.tasks.is_empty() || self.tasks.iter().any(|t| t.active.iter().any(|&d| d >= FINGERS.len())) {
            return bad("tasks must be non-empty and reference fingers 0..5".into());
        }
        if self.duration_s * self.fs_kin < 1.0 {
            return bad("duration too short for the kinematic rate".into());
        }
        Ok(())
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }
}

/// Slow nonnegative drift `c (1 - cos(2 pi f t + phase)) / 2` on an inactive finger.
#[derive(Debug, Clone, Copy)]
struct Drift {
    peak: f64,
    freq: f64,
    phase: f64,
}

impl Drift {
    fn at(&self, t: f64) -> f64 {
        self.peak * (1.0 - (2.0 * PI * self.freq * t + self.phase).cos()) / 2.0
    }
}

struct Kinematics<'a> {
    cfg: &'a SynthConfig,
    active: [bool; 5],
    drift: [Drift; 5],
}

impl Kinematics<'_> {
    fn angle(&self, d: usize, t: f64) -> f64 {
        if self.active[d] {
            self.cfg.amplitude_deg[d] * (1.0 - (2.0 * PI * self.cfg.movement_hz * t).cos()) / 2.0
        } else {
            self.drift[d].at(t)
        }
    }

    /// Angle normalized to [0, 1] by the finger's peak flexion.
    fn normalized(&self, d: usize, t: f64) -> f64 {
        let a = self.cfg.amplitude_deg[d];
        if a > 0.0 {
            (self.angle(d, t) / a).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

fn carrier(n: usize, spec: &FilterSpec, fs: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut band = filtfilt_slice(&white, &design_butterworth(spec, fs)?)?;
    let rms = (band.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        band.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(band)
}

/// Generate one task: the recording and its kinematics.
pub fn generate_task(cfg: &SynthConfig, index: usize) -> Result<(SignalMatrix, Trajectory)> {
    cfg.validate()?;
    let pattern = cfg
        .tasks
        .get(index)
        .ok_or_else(|| Error::OutOfRange(format!("task {index} of {}", cfg.tasks.len())))?;
    let mut rng = stream_rng(child_seed(cfg.seed, index as u64), STREAM_SYNTH);

    let mut active = [false; 5];
    pattern.active.iter().for_each(|&d| active[d] = true);
    let drift = std::array::from_fn(|_| Drift {
        peak: cfg.coupling_deg * rng.random_range(0.5..1.0),
        freq: rng.random_range(0.05..0.3),
        phase: rng.random_range(0.0..2.0 * PI),
    });
    let kin = Kinematics { cfg, active, drift };

    let n_kin = (cfg.duration_s * cfg.fs_kin).round() as usize + 1;
    let angles = Array2::from_shape_fn((n_kin, 5), |(k, d)| kin.angle(d, k as f64 / cfg.fs_kin));
    let labels = FINGERS.iter().map(|s| s.to_string()).collect();
    let trajectory = Trajectory::new(angles, cfg.fs_kin, labels)?;

    let grids = cfg.grids();
    let n = (cfg.duration_s * cfg.fs).floor() as usize;
    let n_pools = cfg.pool_bands_hz.len();
    let bands: Vec<FilterSpec> = cfg.pool_bands_hz.iter().map(|&[lo, hi]| FilterSpec::bandpass(4, lo, hi)).collect();
    // carriers[g][d * n_pools + k]
    let mut carriers: Vec<Vec<Vec<f64>>> = Vec::with_capacity(grids.len());
    for _ in &grids {
        let mut set = Vec::with_capacity(5 * n_pools);
        for _ in 0..5 {
            for band in &bands {
                set.push(carrier(n, band, cfg.fs, &mut rng)?);
            }
        }
        carriers.push(set);
    }

    let n_ch: usize = grids.iter().map(GridLayout::n_channels).sum();
    // footprint[ch] = (grid, weight per (finger, pool))
    let mut footprint = vec![(0usize, vec![0.0f64; 5 * n_pools]); n_ch];
    for (gi, g) in grids.iter().enumerate() {
        let centres: Vec<(f64, f64)> = (0..5 * n_pools)
            .map(|j| {
                let (d, k) = (j / n_pools, j % n_pools);
                let [mr, mc] = cfg.centers[gi][d];
                if k == 0 {
                    return (mr, mc);
                }
                let theta = 2.0 * PI * (k - 1) as f64 / (n_pools - 1) as f64 + d as f64 * PI / 5.0;
                (
                    (mr + cfg.pool_offset * theta.sin()).clamp(0.0, (g.n_rows - 1) as f64),
                    (mc + cfg.pool_offset * theta.cos()).clamp(0.0, (g.n_cols - 1) as f64),
                )
            })
            .collect();
        for r in 0..g.n_rows {
            for c in 0..g.n_cols {
                let w = centres
                    .iter()
                    .map(|&(mr, mc)| {
                        let d2 = (r as f64 - mr).powi(2) + (c as f64 - mc).powi(2);
                        cfg.gain * (-d2 / (2.0 * cfg.spread * cfg.spread)).exp()
                    })
                    .collect();
                footprint[g.channel(r, c)] = (gi, w);
            }
        }
    }
    // log-gain of each grid: three slow sinusoids scaled to unit variance
    let drift_terms: Vec<[(f64, f64); 3]> = grids
        .iter()
        .map(|_| std::array::from_fn(|_| (rng.random_range(0.01..0.05), rng.random_range(0.0..2.0 * PI))))
        .collect();
    let line_gain: Vec<f64> = (0..n_ch).map(|_| rng.random_range(0.5..1.5)).collect();
    let line_phase = rng.random_range(0.0..2.0 * PI);
    let am_phase = rng.random_range(0.0..2.0 * PI);

    let thresholds: Vec<f64> = (0..n_pools).map(|k| k as f64 / n_pools as f64).collect();
    let mut data = Array2::<f64>::zeros((n, n_ch));
    let mut sources = vec![vec![0.0f64; 5 * n_pools]; grids.len()];
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let t = i as f64 / cfg.fs;
        for (gi, src) in sources.iter_mut().enumerate() {
            let wander: f64 = drift_terms[gi].iter().map(|&(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
            let g = (cfg.impedance_drift * wander * (2.0f64 / 3.0).sqrt()).exp();
            for d in 0..5 {
                let flex = kin.normalized(d, t);
                let drive = if gi == FLEXOR_GRID { flex } else { 1.0 - flex };
                for (k, thr) in thresholds.iter().enumerate() {
                    let env = ((drive - thr) / (1.0 - thr)).max(0.0);
                    src[d * n_pools + k] = g * env * carriers[gi][d * n_pools + k][i];
                }
            }
        }
        let line = cfg.powerline
            * (1.0 + 0.2 * (2.0 * PI * 0.1 * t + am_phase).sin())
            * (2.0 * PI * cfg.powerline_hz * t + line_phase).sin();
        for (ch, v) in row.iter_mut().enumerate() {
            let (gi, w) = &footprint[ch];
            let mix: f64 = w.iter().zip(&sources[*gi]).map(|(a, b)| a * b).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = mix + cfg.noise * noise + line_gain[ch] * line;
        }
    }
    Ok((SignalMatrix::new(data, cfg.fs, grids)?, trajectory))
}

/// Every task at once. A default-length task holds about 95 MB of samples;
/// prefer [`generate_task`] for streaming.
pub fn generate_tasks(cfg: &SynthConfig) -> Result<Vec<(SignalMatrix, Trajectory)>> {
    (0..cfg.n_tasks()).map(|i| generate_task(cfg, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::extract_rms;
    use crate::blocks::plan_windows_seconds;
    use crate::metrics::pearson;
    use ndarray::{s, Array1};

    fn short(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            duration_s: 6.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let cfg = short(3);
        let (a, ta) = generate_task(&cfg, 2).unwrap();
        let (b, tb) = generate_task(&cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_task(&short(4), 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn angle_ranges() {
        let cfg = short(1);
        let (_, traj) = generate_task(&cfg, 7).unwrap();
        for d in 0..5 {
            let col = traj.angles().column(d).to_owned();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            assert!((0.0..1e-9).contains(&lo));
            assert!((hi - 90.0).abs() < 1e-9, "{hi}");
        }
        let (_, traj) = generate_task(&cfg, 0).unwrap();
        let thumb = traj.angles().column(0).to_owned();
        assert!(thumb.iter().all(|&v| (0.0..=cfg.coupling_deg).contains(&v)));
    }

    #[test]
    fn envelope_visible_in_rms() {
        let cfg = SynthConfig {
            noise: 0.0,
            powerline: 0.0,
            ..short(5)
        };
        let (x, traj) = generate_task(&cfg, 0).unwrap();
        let [r, c] = cfg.centers[FLEXOR_GRID][1];
        let ch = x.grids()[FLEXOR_GRID].channel(r.round() as usize, c.round() as usize);
        let wp = plan_windows_seconds(x.n_samples(), 0.15, 0.05, cfg.fs).unwrap();
        let rms = extract_rms(&x, &wp).unwrap();
        let env: Array1<f64> = wp
            .starts()
            .iter()
            .map(|&s0| {
                let mid = (s0 as f64 + wp.length() as f64 / 2.0) / cfg.fs;
                traj.sample(mid).unwrap()[1] / 90.0
            })
            .collect();
        let r = pearson(rms.values().slice(s![.., ch]), env.view()).unwrap().unwrap();
        assert!(r >= 0.95, "pearson {r}");
    }

    #[test]
    fn invalid_centre_rejected() {
        let mut cfg = short(0);
        cfg.centers[0][2] = [9.0, 1.0];
        assert!(matches!(generate_task(&cfg, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        assert!(serde_json::from_str::<SynthConfig>(r#"{"noize": 1}"#).is_err());
        let c: SynthConfig = serde_json::from_str(r#"{"noise": 0.3}"#).unwrap();
        assert_eq!(c.noise, 0.3);
        assert_eq!(c.tasks.len(), 8);
    }
}

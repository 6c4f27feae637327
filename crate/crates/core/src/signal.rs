//! Recording containers, cropping, kinematic resampling and the temporal
//! train/test split.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::blocks::WindowPlan;
use crate::error::{Error, Result};
use crate::seed::stream_rng;

/// Finger labels in output-column order.
pub const FINGERS: [&str; 5] = ["thumb", "index", "middle", "ring", "little"];

/// Physical placement of one electrode grid within the channel axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLayout {
    pub name: String,
    pub n_rows: usize,
    pub n_cols: usize,
    pub channel_offset: usize,
}

impl GridLayout {
    pub fn new(name: impl Into<String>, n_rows: usize, n_cols: usize, channel_offset: usize) -> Self {
        Self {
            name: name.into(),
            n_rows,
            n_cols,
            channel_offset,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Row-major channel index of electrode `(row, col)`.
    pub fn channel(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.channel_offset + row * self.n_cols + col
    }

    /// Inverse of [`GridLayout::channel`]; `None` for channels of other grids.
    pub fn position(&self, channel: usize) -> Option<(usize, usize)> {
        let local = channel.checked_sub(self.channel_offset)?;
        (local < self.n_channels()).then(|| (local / self.n_cols, local % self.n_cols))
    }
}

/// Two 8x8 arrays: extensor (EDC) then flexor (FDS), 128 channels total.
pub fn default_grids() -> Vec<GridLayout> {
    vec![GridLayout::new("EDC", 8, 8, 0), GridLayout::new("FDS", 8, 8, 64)]
}

fn validate_grids(grids: &[GridLayout], n_channels: usize) -> Result<()> {
    if grids.is_empty() {
        return Err(Error::InvalidInput("at least one grid layout is required".into()));
    }
    let mut owner = vec![false; n_channels];
    let mut total = 0;
    for g in grids {
        if g.n_rows == 0 || g.n_cols == 0 {
            return Err(Error::InvalidInput(format!("grid {} has an empty dimension", g.name)));
        }
        total += g.n_channels();
        let end = g.channel_offset + g.n_channels();
        if end > n_channels {
            return Err(Error::InvalidInput(format!(
                "grid {} spans channels {}..{end} beyond {n_channels}",
                g.name, g.channel_offset
            )));
        }
        for slot in &mut owner[g.channel_offset..end] {
            if *slot {
                return Err(Error::InvalidInput(format!("grid {} overlaps another grid", g.name)));
            }
            *slot = true;
        }
    }
    if total != n_channels {
        return Err(Error::InvalidInput(format!(
            "grids cover {total} channels, recording has {n_channels}"
        )));
    }
    Ok(())
}

/// S x C recording (samples by channels) plus acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: Array2<f64>,
    fs: f64,
    grids: Vec<GridLayout>,
    /// Time of sample 0 in seconds relative to the original recording.
    start_time: f64,
}

impl SignalMatrix {
    pub fn new(data: Array2<f64>, fs: f64, grids: Vec<GridLayout>) -> Result<Self> {
        Self::with_start(data, fs, grids, 0.0)
    }

    pub fn with_start(data: Array2<f64>, fs: f64, grids: Vec<GridLayout>, start_time: f64) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidInput("recording has no samples".into()));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidInput(format!("sampling rate {fs} must be positive")));
        }
        validate_grids(&grids, data.ncols())?;
        Ok(Self {
            data,
            fs,
            grids,
            start_time,
        })
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn grids(&self) -> &[GridLayout] {
        &self.grids
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    /// Same metadata, new samples of identical shape.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::ShapeMismatch(format!(
                "replacement data {:?} differs from {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        Ok(Self {
            data,
            fs: self.fs,
            grids: self.grids.clone(),
            start_time: self.start_time,
        })
    }
}

// Sample-index rounding that tolerates representation error in t*fs.
fn index_ceil(t: f64, fs: f64) -> usize {
    let v = t * fs;
    let r = v.round();
    if (v - r).abs() < 1e-9 { r as usize } else { v.ceil() as usize }
}

fn index_floor(t: f64, fs: f64) -> usize {
    let v = t * fs;
    let r = v.round();
    if (v - r).abs() < 1e-9 { r as usize } else { v.floor() as usize }
}

/// Keep samples `[ceil(t0*fs), floor(t1*fs))`, times relative to the first sample of `x`.
pub fn crop(x: &SignalMatrix, t0: f64, t1: f64) -> Result<SignalMatrix> {
    let dur = x.duration();
    if !(t0 >= 0.0 && t0 < t1 && t1 <= dur + 1e-9) {
        return Err(Error::InvalidRange(format!(
            "crop window [{t0}, {t1}) s is not inside [0, {dur}] s"
        )));
    }
    let start = index_ceil(t0, x.fs);
    let end = index_floor(t1, x.fs).min(x.n_samples());
    if start >= end {
        return Err(Error::InvalidRange(format!("crop [{t0}, {t1}) s selects no samples")));
    }
    Ok(SignalMatrix {
        data: x.data.slice(s![start..end, ..]).to_owned(),
        fs: x.fs,
        grids: x.grids.clone(),
        start_time: x.start_time + start as f64 / x.fs,
    })
}

/// T x D joint-angle trace in degrees, uniformly sampled from `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    angles: Array2<f64>,
    fs_kin: f64,
    labels: Vec<String>,
    t0: f64,
}

impl Trajectory {
    pub fn new(angles: Array2<f64>, fs_kin: f64, labels: Vec<String>) -> Result<Self> {
        Self::with_start(angles, fs_kin, labels, 0.0)
    }

    pub fn with_start(angles: Array2<f64>, fs_kin: f64, labels: Vec<String>, t0: f64) -> Result<Self> {
        if angles.nrows() < 2 {
            return Err(Error::InvalidInput("trajectory needs at least two samples".into()));
        }
        if !(fs_kin > 0.0 && fs_kin.is_finite()) {
            return Err(Error::InvalidInput(format!("kinematic rate {fs_kin} must be positive")));
        }
        if labels.len() != angles.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} angle columns",
                labels.len(),
                angles.ncols()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidInput(format!("duplicate trajectory label {l}")));
            }
        }
        Ok(Self {
            angles,
            fs_kin,
            labels,
            t0,
        })
    }

    pub fn angles(&self) -> ArrayView2<'_, f64> {
        self.angles.view()
    }

    pub fn fs_kin(&self) -> f64 {
        self.fs_kin
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs_kin
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.angles.nrows() - 1)
    }

    /// Linearly interpolated angles at time `t`.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        const SLACK: f64 = 1e-9;
        if t < self.t0 - SLACK || t > self.t_end() + SLACK {
            return Err(Error::OutOfRange(format!(
                "time {t} s outside trajectory span [{}, {}] s",
                self.t0,
                self.t_end()
            )));
        }
        let pos = ((t - self.t0) * self.fs_kin).max(0.0);
        let last = self.angles.nrows() - 1;
        let i = (pos.floor() as usize).min(last - 1);
        let frac = (pos - i as f64).clamp(0.0, 1.0);
        Ok(self
            .angles
            .row(i)
            .iter()
            .zip(self.angles.row(i + 1).iter())
            .map(|(a, b)| a + frac * (b - a))
            .collect())
    }
}

/// One target row per feature window, sampled at the window end time.
///
/// `signal_start` is the time of sample 0 of the windowed recording, so that
/// a cropped signal stays aligned with the uncropped kinematics.
pub fn resample_targets(traj: &Trajectory, plan: &WindowPlan, fs: f64, signal_start: f64) -> Result<Array2<f64>> {
    let d = traj.angles.ncols();
    let mut out = Array2::zeros((plan.count(), d));
    for (w, &start) in plan.starts().iter().enumerate() {
        let t = signal_start + (start + plan.length()) as f64 / fs;
        let row = traj.sample(t)?;
        out.row_mut(w).assign(&ndarray::Array1::from(row));
    }
    Ok(out)
}

/// Row-aligned feature/target matrices of one task.
#[derive(Debug, Clone)]
pub struct TaskRows {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl TaskRows {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Alignment(format!(
                "{} feature rows vs {} target rows",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Contiguous split at `floor(rows * ratio)`: (first part, second part).
    pub fn split(&self, ratio: f64) -> Result<(TaskRows, TaskRows)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidSpec(format!("split ratio {ratio} must lie in (0, 1)")));
        }
        let cut = (self.len() as f64 * ratio).floor() as usize;
        Ok((
            TaskRows {
                x: self.x.slice(s![..cut, ..]).to_owned(),
                y: self.y.slice(s![..cut, ..]).to_owned(),
            },
            TaskRows {
                x: self.x.slice(s![cut.., ..]).to_owned(),
                y: self.y.slice(s![cut.., ..]).to_owned(),
            },
        ))
    }
}

/// Concatenated training set (row-permuted) and test set (task order kept).
#[derive(Debug, Clone)]
pub struct SplitSet {
    pub train: TaskRows,
    pub test: TaskRows,
    /// Test rows contributed by each task, in order.
    pub test_segments: Vec<usize>,
}

/// Concatenate per-task parts; training rows are shuffled with `seed`.
pub fn assemble_split(train_parts: &[TaskRows], test_parts: &[TaskRows], seed: u64) -> Result<SplitSet> {
    let mut train = concat_rows(train_parts)?;
    let test = concat_rows(test_parts)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(seed, crate::seed::STREAM_SPLIT));
    train = TaskRows {
        x: train.x.select(Axis(0), &order),
        y: train.y.select(Axis(0), &order),
    };
    Ok(SplitSet {
        train,
        test,
        test_segments: test_parts.iter().map(TaskRows::len).collect(),
    })
}

/// Per-task contiguous split at `floor(W*ratio)`, then concatenation across
/// tasks with a seeded permutation of the training rows.
pub fn temporal_split(tasks: &[TaskRows], ratio: f64, seed: u64) -> Result<SplitSet> {
    let mut train_parts = Vec::with_capacity(tasks.len());
    let mut test_parts = Vec::with_capacity(tasks.len());
    for t in tasks {
        let (a, b) = t.split(ratio)?;
        train_parts.push(a);
        test_parts.push(b);
    }
    assemble_split(&train_parts, &test_parts, seed)
}

pub(crate) fn concat_rows(parts: &[TaskRows]) -> Result<TaskRows> {
    let Some(first) = parts.first() else {
        return Err(Error::InvalidInput("no rows to concatenate".into()));
    };
    let fx = first.x.ncols();
    let fy = first.y.ncols();
    if parts.iter().any(|p| p.x.ncols() != fx || p.y.ncols() != fy) {
        return Err(Error::ShapeMismatch("tasks disagree on feature or target width".into()));
    }
    let xs: Vec<_> = parts.iter().map(|p| p.x.view()).collect();
    let ys: Vec<_> = parts.iter().map(|p| p.y.view()).collect();
    Ok(TaskRows {
        x: ndarray::concatenate(Axis(0), &xs).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
        y: ndarray::concatenate(Axis(0), &ys).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::plan_windows;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    const FS: f64 = 2052.52;

    fn recording(n: usize, fs: f64) -> SignalMatrix {
        let data = Array2::from_shape_fn((n, 128), |(t, c)| (t * 131 + c) as f64);
        SignalMatrix::new(data, fs, default_grids()).unwrap()
    }

    fn labels() -> Vec<String> {
        FINGERS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn grid_mapping_is_bijective() {
        let g = GridLayout::new("FDS", 8, 8, 64);
        let mut seen = std::collections::HashSet::new();
        for r in 0..8 {
            for c in 0..8 {
                let ch = g.channel(r, c);
                assert!(seen.insert(ch));
                assert_eq!(g.position(ch), Some((r, c)));
            }
        }
        assert_eq!(g.position(63), None);
        assert_eq!(g.position(128), None);
    }

    #[test]
    fn grids_must_partition_channels() {
        let data = Array2::zeros((10, 128));
        assert!(SignalMatrix::new(data.clone(), FS, vec![GridLayout::new("A", 8, 8, 0)]).is_err());
        let overlapping = vec![GridLayout::new("A", 8, 8, 0), GridLayout::new("B", 8, 8, 32)];
        assert!(SignalMatrix::new(data.clone(), FS, overlapping).is_err());
        assert!(SignalMatrix::new(data, -1.0, default_grids()).is_err());
    }

    #[test]
    fn crop_protocol_window_sample_count() {
        let n = (45.0 * FS).floor() as usize;
        let x = recording(n, FS);
        let c = crop(&x, 4.0, 44.0).unwrap();
        // floor(44*fs) - ceil(4*fs) = 90310 - 8211
        assert_eq!(c.n_samples(), 82_099);
        assert_eq!(c.data()[[0, 0]], x.data()[[8211, 0]]);
        assert_abs_diff_eq!(c.start_time(), 8211.0 / FS, epsilon = 1e-12);
    }

    #[test]
    fn crop_full_span_is_identity() {
        let x = recording(1000, FS);
        let c = crop(&x, 0.0, x.duration()).unwrap();
        assert_eq!(c, x);
    }

    #[test]
    fn crop_reversed_bounds_rejected() {
        let x = recording(50_000, FS);
        assert!(matches!(crop(&x, 10.0, 5.0), Err(Error::InvalidRange(_))));
        assert!(matches!(crop(&x, 0.0, 1e-6), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn resample_constant_and_ramp() {
        let t = 4001;
        let ramp = Array2::from_shape_fn((t, 5), |(i, d)| if d == 0 { i as f64 / 100.0 } else { 30.0 });
        let traj = Trajectory::new(ramp, 100.0, labels()).unwrap();
        // window ending exactly at 20 s
        let fs = 1000.0;
        let plan = plan_windows(20_000, 20_000, 0).unwrap();
        let y = resample_targets(&traj, &plan, fs, 0.0).unwrap();
        assert_eq!(y.dim(), (1, 5));
        assert_abs_diff_eq!(y[[0, 0]], 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[[0, 3]], 30.0, epsilon = 1e-12);
    }

    #[test]
    fn resample_row_count_matches_windows() {
        let traj = Trajectory::new(Array2::from_elem((101, 5), 30.0), 100.0, labels()).unwrap();
        let plan = plan_windows(1000, 150, 50).unwrap();
        let y = resample_targets(&traj, &plan, 1000.0, 0.0).unwrap();
        assert_eq!(y.dim(), (9, 5));
        assert!(y.iter().all(|&v| v == 30.0));
    }

    #[test]
    fn resample_beyond_span_errors() {
        let traj = Trajectory::new(Array2::zeros((11, 5)), 100.0, labels()).unwrap();
        let plan = plan_windows(1000, 150, 50).unwrap();
        let err = resample_targets(&traj, &plan, 1000.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::OutOfRange(_)));
    }

    #[test]
    fn trajectory_rejects_duplicate_labels() {
        let l = vec!["a".into(), "a".into()];
        assert!(Trajectory::new(Array2::zeros((3, 2)), 100.0, l).is_err());
        assert!(Trajectory::new(Array2::zeros((1, 5)), 100.0, labels()).is_err());
    }

    fn indexed_task(rows: usize, offset: usize) -> TaskRows {
        let x = Array2::from_shape_fn((rows, 2), |(i, j)| (offset + i) as f64 + 0.5 * j as f64);
        let y = Array2::from_shape_fn((rows, 1), |(i, _)| (offset + i) as f64);
        TaskRows::new(x, y).unwrap()
    }

    #[test]
    fn split_hundred_rows_half() {
        let s = temporal_split(&[indexed_task(100, 0)], 0.5, 7).unwrap();
        assert_eq!(s.train.len(), 50);
        assert_eq!(s.test.len(), 50);
        let test_ids: Vec<f64> = s.test.y.column(0).to_vec();
        assert_eq!(test_ids, (50..100).map(|v| v as f64).collect::<Vec<_>>());
        let mut train_ids: Vec<f64> = s.train.y.column(0).to_vec();
        assert_ne!(train_ids, (0..50).map(|v| v as f64).collect::<Vec<_>>());
        train_ids.sort_by(f64::total_cmp);
        assert_eq!(train_ids, (0..50).map(|v| v as f64).collect::<Vec<_>>());
        // features travel with their targets
        for (xr, yr) in s.train.x.rows().into_iter().zip(s.train.y.rows()) {
            assert_eq!(xr[0], yr[0]);
        }
    }

    #[test]
    fn split_is_seed_deterministic() {
        let tasks = [indexed_task(60, 0)];
        let a = temporal_split(&tasks, 0.5, 11).unwrap();
        let b = temporal_split(&tasks, 0.5, 11).unwrap();
        let c = temporal_split(&tasks, 0.5, 12).unwrap();
        assert_eq!(a.train.y, b.train.y);
        assert_ne!(a.train.y, c.train.y);
    }

    #[test]
    fn split_eight_tasks_keeps_test_order() {
        let tasks: Vec<TaskRows> = (0..8).map(|k| indexed_task(100, 1000 * k)).collect();
        let s = temporal_split(&tasks, 0.5, 3).unwrap();
        assert_eq!(s.train.len(), 400);
        assert_eq!(s.test.len(), 400);
        assert_eq!(s.test_segments, vec![50; 8]);
        let expected: Array1<f64> = (0..8)
            .flat_map(|k| (50..100).map(move |i| (1000 * k + i) as f64))
            .collect();
        assert_eq!(s.test.y.column(0), expected);
    }

    #[test]
    fn misaligned_rows_rejected() {
        let e = TaskRows::new(Array2::zeros((5, 2)), Array2::zeros((4, 1))).unwrap_err();
        assert!(matches!(e, Error::Alignment(_)));
    }
}

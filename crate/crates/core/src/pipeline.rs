//! End-to-end decoding runs and single-parameter sweeps.
//!
//! Recordings are processed one task at a time: each task is loaded,
//! filtered, cropped and reduced to feature rows before the next is touched,
//! so memory stays bounded by a single recording.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::baseline::{
    extract_mav_wl, extract_rms, fit_nmf, fit_pca, select_components, transform, ComponentSelection,
    DecompositionKind, DecompositionModel,
};
use crate::blocks::{plan_blocks, plan_windows_seconds};
use crate::error::{Error, Result, StageExt};
use crate::filter::{self, FilterSpec};
use crate::metrics::{evaluate, MetricsReport};
use crate::mld::extract_mld_bfm;
use crate::regression::{
    build_sequences, grid_search_cv, postprocess, reconstruct_series, CvReport, FittedRegressor, Hyper, RegressorKind,
    ScalerPair, SequencePlan, CV_FOLDS,
};
use crate::signal::{assemble_split, crop, GridLayout, SignalMatrix, TaskRows, Trajectory};
use crate::synth::{generate_task, SynthConfig};
use crate::tensor::{ColumnTag, FeatureKind, FeatureTensor};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    MldBfm,
    Rms,
    MavWl,
    Pca,
    Nmf,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [FeatureSet::MldBfm, FeatureSet::Rms, FeatureSet::MavWl, FeatureSet::Pca, FeatureSet::Nmf];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::MldBfm => "mld-bfm",
            FeatureSet::Rms => "rms",
            FeatureSet::MavWl => "mav-wl",
            FeatureSet::Pca => "pca",
            FeatureSet::Nmf => "nmf",
        }
    }

    fn decomposition(self) -> Option<DecompositionKind> {
        match self {
            FeatureSet::Pca => Some(DecompositionKind::Pca),
            FeatureSet::Nmf => Some(DecompositionKind::Nmf),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature set {s:?}")))
    }
}

/// Filtering and cropping applied to every recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preprocess {
    pub bandpass_hz: [f64; 2],
    pub order: usize,
    /// Notch centre; `null` disables the notch.
    pub notch_hz: Option<f64>,
    pub notch_q: f64,
    /// Retained span `[start, end)` in seconds.
    pub crop_s: [f64; 2],
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            bandpass_hz: [10.0, 500.0],
            order: 4,
            notch_hz: Some(60.0),
            notch_q: 30.0,
            crop_s: [4.0, 44.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset directory; when absent a synthetic dataset is generated in
    /// memory from `synth`, seeded with `seed`.
    pub dataset: Option<PathBuf>,
    pub synth: SynthConfig,
    pub feature: FeatureSet,
    pub block_size: usize,
    pub block_step: usize,
    pub window_s: f64,
    pub overlap_s: f64,
    pub model: RegressorKind,
    /// Replaces the default grid of `model`.
    pub grid: Option<Vec<Hyper>>,
    pub n_win: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub preprocess: Preprocess,
    pub plateau_threshold: f64,
    pub cv_folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth: SynthConfig::default(),
            feature: FeatureSet::MldBfm,
            block_size: 2,
            block_step: 1,
            window_s: 0.15,
            overlap_s: 0.05,
            model: RegressorKind::Ridge,
            grid: None,
            n_win: 1,
            split_ratio: 0.5,
            seed: 0,
            out: None,
            preprocess: Preprocess::default(),
            plateau_threshold: crate::baseline::DEFAULT_PLATEAU_MSE,
            cv_folds: CV_FOLDS,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parameter checks that do not need data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.block_size == 0 || self.block_step == 0 {
            return bad("block_size and block_step must be at least 1".into());
        }
        if !(self.window_s > 0.0) || !(self.overlap_s >= 0.0) || self.overlap_s >= self.window_s {
            return bad(format!("window {} s with overlap {} s is invalid", self.window_s, self.overlap_s));
        }
        if !(1..=crate::regression::MAX_SEQUENCE).contains(&self.n_win) {
            return bad(format!("n_win {} must lie in 1..=10", self.n_win));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie in (0, 1)", self.split_ratio));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if !(self.plateau_threshold > 0.0) {
            return bad("plateau_threshold must be positive".into());
        }
        let [c0, c1] = self.preprocess.crop_s;
        if !(c0 >= 0.0 && c0 < c1) {
            return bad(format!("crop span {c0}-{c1} s is empty"));
        }
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return bad("grid override is empty".into());
            }
            if let Some(h) = grid.iter().find(|h| h.kind() != self.model) {
                return bad(format!("grid point {h:?} does not match model {}", self.model));
            }
        }
        if self.dataset.is_none() {
            self.synth.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<Hyper> {
        self.grid.clone().unwrap_or_else(|| self.model.default_grid())
    }

    pub fn feature_request(&self) -> FeatureRequest {
        let base = match self.feature {
            FeatureSet::Pca | FeatureSet::Nmf => FeatureSet::Rms,
            f => f,
        };
        let blocks = base == FeatureSet::MldBfm;
        FeatureRequest {
            base,
            block_size: if blocks { self.block_size } else { 0 },
            block_step: if blocks { self.block_step } else { 0 },
            window_s: self.window_s,
            overlap_s: self.overlap_s,
        }
    }

    /// Synthetic generator settings seeded with the root seed.
    pub fn seeded_synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}

/// Per-task feature extraction settings; runs that share one can share the
/// extracted rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureRequest {
    /// Per-task feature set (PCA and NMF start from RMS).
    pub base: FeatureSet,
    pub block_size: usize,
    pub block_step: usize,
    pub window_s: f64,
    pub overlap_s: f64,
}

/// One recording with its kinematics.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub signal: SignalMatrix,
    pub trajectory: Trajectory,
}

/// Anything that can hand out recordings one at a time.
pub trait TaskSource {
    fn n_tasks(&self) -> usize;
    fn task(&self, index: usize) -> Result<Task>;
    /// Provenance recorded in manifests.
    fn describe(&self) -> serde_json::Value;
}

impl TaskSource for SynthConfig {
    fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn task(&self, index: usize) -> Result<Task> {
        let (signal, trajectory) = generate_task(self, index)?;
        Ok(Task {
            name: self.tasks[index].name.clone(),
            signal,
            trajectory,
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "synthetic": self })
    }
}

/// Feature rows and aligned targets of one task.
#[derive(Debug, Clone)]
pub struct TaskFeatures {
    pub name: String,
    pub features: FeatureTensor,
    pub targets: Array2<f64>,
    pub labels: Vec<String>,
    /// Feature windows per second.
    pub pred_rate: f64,
    pub grids: Vec<GridLayout>,
}

/// Band-pass, optional notch, then crop.
pub fn preprocess(signal: &SignalMatrix, p: &Preprocess) -> Result<SignalMatrix> {
    let mut x = filter::apply(signal, &FilterSpec::bandpass(p.order, p.bandpass_hz[0], p.bandpass_hz[1])).stage("bandpass")?;
    if let Some(f0) = p.notch_hz {
        x = filter::apply(&x, &FilterSpec::notch(f0, p.notch_q)).stage("notch")?;
    }
    crop(&x, p.crop_s[0], p.crop_s[1]).stage("crop")
}

/// Features and window-end targets of one preprocessed recording.
pub fn extract_task_features(
    name: &str,
    signal: &SignalMatrix,
    trajectory: &Trajectory,
    req: &FeatureRequest,
) -> Result<TaskFeatures> {
    let fs = signal.fs();
    let windows = plan_windows_seconds(signal.n_samples(), req.window_s, req.overlap_s, fs).stage("windows")?;
    let features = match req.base {
        FeatureSet::MldBfm => {
            let blocks = plan_blocks(signal.grids(), req.block_size, req.block_step).stage("blocks")?;
            extract_mld_bfm(signal, &blocks, &windows)
        }
        FeatureSet::Rms | FeatureSet::Pca | FeatureSet::Nmf => extract_rms(signal, &windows),
        FeatureSet::MavWl => extract_mav_wl(signal, &windows),
    }
    .stage("features")?;
    let targets = crate::signal::resample_targets(trajectory, &windows, fs, signal.start_time()).stage("targets")?;
    Ok(TaskFeatures {
        name: name.to_string(),
        features,
        targets,
        labels: trajectory.labels().to_vec(),
        pred_rate: windows.rate(fs),
        grids: signal.grids().to_vec(),
    })
}

/// Extract every requested feature set from every task, loading and
/// preprocessing each recording once. Result is indexed `[request][task]`.
pub fn prepare_features(
    source: &dyn TaskSource,
    pre: &Preprocess,
    requests: &[FeatureRequest],
) -> Result<Vec<Vec<TaskFeatures>>> {
    let mut out: Vec<Vec<TaskFeatures>> = requests.iter().map(|_| Vec::with_capacity(source.n_tasks())).collect();
    for i in 0..source.n_tasks() {
        let task = source.task(i).stage("load")?;
        let clean = preprocess(&task.signal, pre)?;
        drop(task.signal);
        for (req, dst) in requests.iter().zip(out.iter_mut()) {
            dst.push(extract_task_features(&task.name, &clean, &task.trajectory, req)?);
        }
        info!("prepared task {} ({})", i + 1, task.name);
    }
    Ok(out)
}

/// Source named by the config: the dataset directory or the seeded generator.
pub fn open_source(cfg: &RunConfig) -> Result<Box<dyn TaskSource>> {
    match &cfg.dataset {
        Some(dir) => Ok(Box::new(crate::io::DatasetDir::open(dir)?)),
        None => Ok(Box::new(cfg.seeded_synth())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub source: serde_json::Value,
    pub tasks: Vec<String>,
    pub n_features: usize,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub pred_rate_hz: f64,
    pub postprocess_bypassed: bool,
    pub selected: Hyper,
    pub cv: CvReport,
    pub components: Option<ComponentSelection>,
    pub constant_features: usize,
    pub wall_time_s: f64,
}

/// Everything needed to apply a trained decoder to new feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDecoder {
    pub feature: FeatureSet,
    pub columns: Vec<String>,
    pub labels: Vec<String>,
    pub sequence: SequencePlan,
    pub decomposition: Option<DecompositionModel>,
    pub scalers: ScalerPair,
    pub regressor: FittedRegressor,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub manifest: RunManifest,
    pub decoder: TrainedDecoder,
    /// Test targets and smoothed predictions in degrees, tasks in order.
    pub targets: Array2<f64>,
    pub predictions: Array2<f64>,
    pub test_segments: Vec<usize>,
}

pub(crate) struct Split {
    pub train: Vec<TaskRows>,
    pub test: Vec<TaskRows>,
    pub columns: Vec<ColumnTag>,
    pub labels: Vec<String>,
    pub pred_rate: f64,
    pub decomposition: Option<(DecompositionModel, ComponentSelection)>,
}

/// Per-task temporal split, with PCA/NMF fitted on the training halves.
pub(crate) fn split_tasks(cfg: &RunConfig, tasks: &[TaskFeatures]) -> Result<Split> {
    let first = tasks.first().ok_or_else(|| Error::InvalidInput("no tasks".into()))?;
    let mut train = Vec::with_capacity(tasks.len());
    let mut test = Vec::with_capacity(tasks.len());
    for t in tasks {
        if t.features.columns() != first.features.columns() || t.labels != first.labels {
            return Err(Error::ShapeMismatch(format!("task {} disagrees on feature columns or labels", t.name)));
        }
        let (a, b) = TaskRows::new(t.features.values().to_owned(), t.targets.clone())?.split(cfg.split_ratio)?;
        train.push(a);
        test.push(b);
    }
    let mut columns = first.features.columns().to_vec();
    let mut decomposition = None;
    if let Some(kind) = cfg.feature.decomposition() {
        let views: Vec<_> = train.iter().map(|p| p.x.view()).collect();
        let rms = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let sel = select_components(rms.view(), kind, cfg.plateau_threshold, cfg.seed)?;
        info!("{}: selected N* = {} components{}", cfg.feature, sel.n_star, if sel.fallback { " (no plateau, fallback)" } else { "" });
        let model = match kind {
            DecompositionKind::Pca => fit_pca(rms.view(), sel.n_star)?,
            DecompositionKind::Nmf => fit_nmf(rms.view(), sel.n_star, cfg.seed)?,
        };
        for part in train.iter_mut().chain(test.iter_mut()) {
            part.x = transform(&model, part.x.view())?;
        }
        let fk = if kind == DecompositionKind::Pca { FeatureKind::Pca } else { FeatureKind::Nmf };
        columns = (0..sel.n_star).map(|i| ColumnTag::component(i, fk)).collect();
        decomposition = Some((model, sel));
    }
    Ok(Split {
        train,
        test,
        columns,
        labels: first.labels.clone(),
        pred_rate: first.pred_rate,
        decomposition,
    })
}

/// Sequence each part; training parts are returned as-is for later shuffling.
pub(crate) fn sequence_parts(parts: &[TaskRows], n_win: usize) -> Result<(Vec<TaskRows>, SequencePlan)> {
    let first = parts.first().ok_or_else(|| Error::InvalidInput("no rows".into()))?;
    let plan = SequencePlan::new(n_win, first.x.ncols(), first.y.ncols())?;
    let seq = parts
        .iter()
        .map(|p| {
            let (x, y) = build_sequences(p.x.view(), p.y.view(), &plan)?;
            TaskRows::new(x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((seq, plan))
}

/// Smooth each task's predictions separately. Returns whether smoothing was skipped.
pub(crate) fn postprocess_segments(pred: &mut Array2<f64>, segments: &[usize], rate: f64) -> Result<bool> {
    let mut bypassed = false;
    let mut start = 0;
    for &len in segments {
        let part = pred.slice(s![start..start + len, ..]);
        let (smooth, skip) = postprocess(part, rate)?;
        bypassed |= skip;
        pred.slice_mut(s![start..start + len, ..]).assign(&smooth);
        start += len;
    }
    Ok(bypassed)
}

/// Split, sequence, scale, search, predict, smooth and score.
pub fn run_from_features(cfg: &RunConfig, tasks: &[TaskFeatures]) -> Result<RunOutput> {
    let clock = Instant::now();
    cfg.validate()?;
    let split = split_tasks(cfg, tasks).stage("split")?;
    let (train_seq, plan) = sequence_parts(&split.train, cfg.n_win).stage("sequences")?;
    let (test_seq, _) = sequence_parts(&split.test, cfg.n_win).stage("sequences")?;
    let set = assemble_split(&train_seq, &test_seq, cfg.seed).stage("split")?;

    let scalers = ScalerPair::fit(set.train.x.view(), set.train.y.view()).stage("scale")?;
    let xs = scalers.input.transform(set.train.x.view()).stage("scale")?;
    let ys = scalers.output.transform(set.train.y.view());
    let fitted = grid_search_cv(&cfg.grid(), xs.view(), ys.view(), cfg.cv_folds, cfg.seed).stage("fit")?;

    let xt = scalers.input.transform(set.test.x.view()).stage("scale")?;
    let pred_scaled = fitted.predict(xt.view()).stage("predict")?;
    let pred_seq = scalers.output.inverse(pred_scaled.view());
    let mut predictions = reconstruct_series(pred_seq.view(), &plan).stage("reconstruct")?;
    let targets = reconstruct_series(set.test.y.view(), &plan).stage("reconstruct")?;
    let bypassed = postprocess_segments(&mut predictions, &set.test_segments, split.pred_rate).stage("postprocess")?;
    if bypassed {
        info!("prediction smoothing bypassed at {:.3} Hz", split.pred_rate);
    }
    let report = evaluate(targets.view(), predictions.view(), &split.labels).stage("metrics")?;

    let (decomposition, components) = match split.decomposition {
        Some((m, s)) => (Some(m), Some(s)),
        None => (None, None),
    };
    let manifest = RunManifest {
        tool: "mldbfm".into(),
        version: VERSION.into(),
        seed: cfg.seed,
        config: cfg.clone(),
        source: serde_json::Value::Null,
        tasks: tasks.iter().map(|t| t.name.clone()).collect(),
        n_features: split.columns.len(),
        n_train_rows: set.train.len(),
        n_test_rows: set.test.len(),
        pred_rate_hz: split.pred_rate,
        postprocess_bypassed: bypassed,
        selected: fitted.hyper,
        cv: fitted.cv.clone(),
        components,
        constant_features: scalers.input.constant.len(),
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        report,
        manifest,
        decoder: TrainedDecoder {
            feature: cfg.feature,
            columns: split.columns.iter().map(ToString::to_string).collect(),
            labels: split.labels,
            sequence: plan,
            decomposition,
            scalers,
            regressor: fitted,
        },
        targets,
        predictions,
        test_segments: set.test_segments,
    })
}

/// Full run from the config's data source.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let source = open_source(cfg)?;
    run_with_source(cfg, source.as_ref())
}

pub fn run_with_source(cfg: &RunConfig, source: &dyn TaskSource) -> Result<RunOutput> {
    let clock = Instant::now();
    let tasks = prepare_features(source, &cfg.preprocess, &[cfg.feature_request()])?.remove(0);
    let mut out = run_from_features(cfg, &tasks)?;
    out.manifest.source = source.describe();
    out.manifest.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    BlockSize,
    BlockStep,
    /// Window length in milliseconds.
    Window,
    NWin,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [SweepParam::BlockSize, SweepParam::BlockStep, SweepParam::Window, SweepParam::NWin];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::BlockSize => "block_size",
            SweepParam::BlockStep => "block_step",
            SweepParam::Window => "window",
            SweepParam::NWin => "n_win",
        }
    }

    pub fn values(self) -> Vec<u32> {
        match self {
            SweepParam::BlockSize => (1..=8).collect(),
            SweepParam::BlockStep => (1..=6).collect(),
            SweepParam::Window => (100..=500).step_by(50).collect(),
            SweepParam::NWin => (1..=10).collect(),
        }
    }

    pub fn apply(self, cfg: &RunConfig, value: u32) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            SweepParam::BlockSize => c.block_size = value as usize,
            SweepParam::BlockStep => c.block_step = value as usize,
            SweepParam::Window => c.window_s = value as f64 / 1000.0,
            SweepParam::NWin => c.n_win = value as usize,
        }
        c
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: u32,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub labels: Vec<String>,
    pub rows: Vec<SweepRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepTable {
    /// One line per value: `param,value,status,r2_vw,rmse_vw,mae_vw,r_vw,r2_<dof>...`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["param", "value", "status", "r2_vw", "rmse_vw", "mae_vw", "r_vw"]
            .map(String::from)
            .to_vec();
        header.extend(self.labels.iter().map(|l| format!("r2_{l}")));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![self.param.to_string(), row.value.to_string()];
            match &row.report {
                Some(r) => {
                    rec.push("ok".into());
                    rec.extend([Some(r.r2_vw), Some(r.rmse_vw), Some(r.mae_vw), r.r_vw].map(fmt_opt));
                    rec.extend(r.dofs.iter().map(|d| fmt_opt(d.r2)));
                }
                None => {
                    rec.push("failed".into());
                    rec.extend(std::iter::repeat(String::new()).take(4 + self.labels.len()));
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

/// Vary one parameter around `cfg`, one full run per value. Recordings are
/// loaded once and every distinct feature set is extracted in that pass.
pub fn sweep(cfg: &RunConfig, param: SweepParam, source: &dyn TaskSource) -> Result<SweepTable> {
    cfg.validate()?;
    let values = param.values();
    let configs: Vec<RunConfig> = values.iter().map(|&v| param.apply(cfg, v)).collect();
    let mut requests: Vec<FeatureRequest> = Vec::new();
    let req_index: Vec<usize> = configs
        .iter()
        .map(|c| {
            let r = c.feature_request();
            requests.iter().position(|q| *q == r).unwrap_or_else(|| {
                requests.push(r);
                requests.len() - 1
            })
        })
        .collect();
    let prepared = prepare_features(source, &cfg.preprocess, &requests)?;
    let labels = prepared
        .first()
        .and_then(|p| p.first())
        .map(|t| t.labels.clone())
        .unwrap_or_default();
    let rows = values
        .iter()
        .zip(&configs)
        .zip(&req_index)
        .map(|((&value, c), &ri)| match run_from_features(c, &prepared[ri]) {
            Ok(out) => SweepRow {
                value,
                report: Some(out.report),
                error: None,
            },
            Err(e) => {
                log::warn!("{param}={value} failed: {e}");
                SweepRow {
                    value,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(SweepTable { param, labels, rows })
}

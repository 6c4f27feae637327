//! On-disk formats: f32le signals with JSON headers, trajectory and feature
//! CSVs, binary feature tensors and dataset directories.
//!
//! Every writer goes through [`write_atomic`], so readers never observe a
//! half-written file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{csv_err, Task, TaskSource, VERSION};
use crate::signal::{GridLayout, SignalMatrix, Trajectory};
use crate::synth::{generate_task, SynthConfig};
use crate::tensor::{ColumnTag, FeatureTensor};

pub const DTYPE: &str = "f32le";
pub const MANIFEST: &str = "manifest.json";

/// Write through a sibling temp file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn f32le_bytes<'a>(values: impl Iterator<Item = &'a f64>) -> Vec<u8> {
    values.flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn read_f32le(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| io_context(e, path))?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} bytes, header implies {}x{} f32 values",
            path.display(),
            bytes.len(),
            rows,
            cols
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape checked"))
}

/// Binary file paired with a JSON header: `x.json` pairs with `x.f32`.
pub fn binary_path(header: &Path) -> PathBuf {
    header.with_extension("f32")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalHeader {
    pub fs: f64,
    pub n_samples: usize,
    pub n_channels: usize,
    pub grids: Vec<GridLayout>,
    pub dtype: String,
    #[serde(default)]
    pub start_time: f64,
}

/// Header JSON at `header`, sample-major f32le samples next to it.
pub fn write_signal(header: &Path, x: &SignalMatrix) -> Result<()> {
    let h = SignalHeader {
        fs: x.fs(),
        n_samples: x.n_samples(),
        n_channels: x.n_channels(),
        grids: x.grids().to_vec(),
        dtype: DTYPE.into(),
        start_time: x.start_time(),
    };
    write_atomic(&binary_path(header), &f32le_bytes(x.data().iter()))?;
    write_json(header, &h)
}

pub fn read_signal(header: &Path) -> Result<SignalMatrix> {
    let h: SignalHeader = read_json(header)?;
    if h.dtype != DTYPE {
        return Err(Error::InvalidInput(format!("unsupported dtype {:?}", h.dtype)));
    }
    let data = read_f32le(&binary_path(header), h.n_samples, h.n_channels)?;
    SignalMatrix::with_start(data, h.fs, h.grids, h.start_time)
}

/// CSV with a leading `t` column in seconds, then one column per label.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(traj.labels().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in traj.angles().rows().into_iter().enumerate() {
        let mut rec = vec![traj.time(i).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
}

/// Reads a uniformly sampled trajectory; the rate comes from the time column.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: header must start with t", path.display())));
    }
    let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let mut nums = rec.iter().map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("{}: bad number {s:?}", path.display())))
        });
        times.push(nums.next().transpose()?.unwrap_or(f64::NAN));
        for v in nums {
            values.push(v?);
        }
    }
    if times.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: fewer than two samples", path.display())));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let uniform = times
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - (times[0] + i as f64 * dt)).abs() <= 1e-6 * dt.max(1.0));
    if !(dt > 0.0) || !uniform {
        return Err(Error::InvalidInput(format!("{}: time column is not uniformly increasing", path.display())));
    }
    let angles = Array2::from_shape_vec((times.len(), labels.len()), values)
        .map_err(|_| Error::ShapeMismatch(format!("{}: ragged rows", path.display())))?;
    Trajectory::with_start(angles, 1.0 / dt, labels, times[0])
}

/// Header row of provenance tags, then one row per window.
pub fn write_features_csv(path: &Path, f: &FeatureTensor) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(f.columns().iter().map(ToString::to_string)).map_err(csv_err)?;
    for row in f.values().rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
}

pub fn read_features_csv(path: &Path) -> Result<FeatureTensor> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let columns = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::parse)
        .collect::<Result<Vec<ColumnTag>>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        for s in rec.map_err(csv_err)?.iter() {
            values.push(s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number {s:?}")))?);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, columns.len()), values)
        .map_err(|_| Error::ShapeMismatch(format!("{}: ragged rows", path.display())))?;
    FeatureTensor::new(values, columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureHeader {
    pub n_rows: usize,
    pub n_cols: usize,
    pub columns: Vec<String>,
    pub dtype: String,
}

/// JSON sidecar at `header`, row-major f32le values next to it.
pub fn write_features_binary(header: &Path, f: &FeatureTensor) -> Result<()> {
    let h = FeatureHeader {
        n_rows: f.n_rows(),
        n_cols: f.n_cols(),
        columns: f.columns().iter().map(ToString::to_string).collect(),
        dtype: DTYPE.into(),
    };
    write_atomic(&binary_path(header), &f32le_bytes(f.values().iter()))?;
    write_json(header, &h)
}

pub fn read_features_binary(header: &Path) -> Result<FeatureTensor> {
    let h: FeatureHeader = read_json(header)?;
    if h.dtype != DTYPE || h.columns.len() != h.n_cols {
        return Err(Error::InvalidInput(format!("{}: inconsistent feature header", header.display())));
    }
    let columns = h.columns.iter().map(|s| s.parse()).collect::<Result<Vec<ColumnTag>>>()?;
    FeatureTensor::new(read_f32le(&binary_path(header), h.n_rows, h.n_cols)?, columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    /// Signal header, relative to the dataset directory.
    pub signal: PathBuf,
    pub trajectory: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub synth: Option<SynthConfig>,
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub wall_time_s: Option<f64>,
}

/// A directory of recordings listed in `manifest.json`.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(&root.join(MANIFEST))?;
        for t in &manifest.tasks {
            for p in [&t.signal, &t.trajectory] {
                if !root.join(p).is_file() {
                    return Err(Error::InvalidInput(format!("missing dataset file {}", root.join(p).display())));
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }
}

impl TaskSource for DatasetDir {
    fn n_tasks(&self) -> usize {
        self.manifest.tasks.len()
    }

    fn task(&self, index: usize) -> Result<Task> {
        let e = &self.manifest.tasks[index];
        Ok(Task {
            name: e.name.clone(),
            signal: read_signal(&self.root.join(&e.signal))?,
            trajectory: read_trajectory(&self.root.join(&e.trajectory))?,
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "dataset": self.root, "manifest": self.manifest })
    }
}

/// Generate every task of `cfg` into `root`, one at a time.
pub fn write_synth_dataset(root: &Path, cfg: &SynthConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut tasks = Vec::with_capacity(cfg.n_tasks());
    for (i, pattern) in cfg.tasks.iter().enumerate() {
        let (signal, traj) = generate_task(cfg, i)?;
        let entry = TaskEntry {
            name: pattern.name.clone(),
            signal: PathBuf::from(format!("{:02}_{}.json", i, pattern.name)),
            trajectory: PathBuf::from(format!("{:02}_{}.csv", i, pattern.name)),
        };
        write_signal(&root.join(&entry.signal), &signal)?;
        write_trajectory(&root.join(&entry.trajectory), &traj)?;
        tasks.push(entry);
    }
    let manifest = DatasetManifest {
        tool: "mldbfm".into(),
        version: VERSION.into(),
        seed: Some(cfg.seed),
        synth: Some(cfg.clone()),
        tasks,
        wall_time_s: None,
    };
    write_json(&root.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{default_grids, FINGERS};
    use crate::tensor::FeatureKind;

    #[test]
    fn signal_round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array2::from_shape_fn((5, 128), |(i, c)| (i as f64 * 0.37 - c as f64 * 0.011).sin());
        let x = SignalMatrix::with_start(data, 2048.0, default_grids(), 1.5).unwrap();
        let p = dir.path().join("s.json");
        write_signal(&p, &x).unwrap();
        assert_eq!(fs::metadata(binary_path(&p)).unwrap().len(), 5 * 128 * 4);
        let y = read_signal(&p).unwrap();
        assert_eq!(y.start_time(), 1.5);
        for (a, b) in x.data().iter().zip(y.data().iter()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let x = SignalMatrix::new(Array2::zeros((4, 128)), 1000.0, default_grids()).unwrap();
        let p = dir.path().join("s.json");
        write_signal(&p, &x).unwrap();
        fs::write(binary_path(&p), [0u8; 12]).unwrap();
        assert!(matches!(read_signal(&p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let angles = Array2::from_shape_fn((11, 5), |(i, d)| i as f64 * 1.25 + d as f64);
        let labels = FINGERS.iter().map(|s| s.to_string()).collect();
        let t = Trajectory::with_start(angles, 100.0, labels, 0.5).unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory(&p, &t).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,thumb,index,middle,ring,little\n"));
        let back = read_trajectory(&p).unwrap();
        assert_eq!(back.angles(), t.angles());
        assert!((back.fs_kin() - 100.0).abs() < 1e-9);
        assert_eq!(back.t0(), 0.5);
    }

    #[test]
    fn feature_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cols = vec![ColumnTag::block(0, FeatureKind::Sigma), ColumnTag::channel(7, FeatureKind::Rms)];
        let f = FeatureTensor::new(ndarray::array![[1.5, -2.0], [0.25, 3.0]], cols).unwrap();
        let c = dir.path().join("f.csv");
        write_features_csv(&c, &f).unwrap();
        assert!(fs::read_to_string(&c).unwrap().starts_with("b0:sigma,ch7:rms\n"));
        assert_eq!(read_features_csv(&c).unwrap(), f);
        let b = dir.path().join("f.json");
        write_features_binary(&b, &f).unwrap();
        assert_eq!(read_features_binary(&b).unwrap(), f);
    }

    #[test]
    fn dataset_directory_matches_generator() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            duration_s: 2.0,
            tasks: SynthConfig::default().tasks[..2].to_vec(),
            ..SynthConfig::default()
        };
        write_synth_dataset(dir.path(), &cfg).unwrap();
        let ds = DatasetDir::open(dir.path()).unwrap();
        assert_eq!(ds.n_tasks(), 2);
        let from_disk = ds.task(1).unwrap();
        let direct = cfg.task(1).unwrap();
        assert_eq!(from_disk.name, direct.name);
        assert_eq!(from_disk.signal.n_samples(), direct.signal.n_samples());
        assert_eq!(from_disk.trajectory.angles().nrows(), direct.trajectory.angles().nrows());
        fs::remove_file(dir.path().join(&ds.manifest.tasks[0].trajectory)).unwrap();
        assert!(DatasetDir::open(dir.path()).is_err());
    }
}

//! Command-line driver: synthesize data, extract features, train, evaluate,
//! sweep a parameter or run block selection.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use ndarray::Array2;
use serde::Serialize;

use mldbfm::blocks::plan_blocks;
use mldbfm::io::{write_atomic, write_features_binary, write_json, write_synth_dataset, MANIFEST};
use mldbfm::pipeline::{
    open_source, prepare_features, run_with_source, sweep, FeatureSet, RunConfig, RunOutput, SweepParam, VERSION,
};
use mldbfm::regression::RegressorKind;
use mldbfm::sfbs::{contribution_map, sfbs};
use mldbfm::{Error, Result};

#[derive(Parser)]
#[command(name = "mldbfm", version, about = "Finger kinematics from HD-sEMG with block-wise linear descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset directory.
    Synth(Common),
    /// Write per-task feature tensors and aligned targets.
    Extract(Common),
    /// Fit the decoder and save it with its cross-validation report.
    Train(Common),
    /// Fit, predict the held-out halves and report metrics.
    Evaluate(Common),
    /// Vary one parameter around the config and tabulate metrics.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// block_size, block_step, window or n_win.
        #[arg(long)]
        param: String,
    },
    /// Sequential forward block selection and contribution maps.
    Sfbs {
        #[command(flatten)]
        common: Common,
        /// Stop after this many selection steps.
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory written by `synth`; without one data is generated in memory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// mld-bfm, rms, mav-wl, pca or nmf.
    #[arg(long)]
    feature: Option<String>,
    /// ridge, lasso, knn or mlp.
    #[arg(long)]
    model: Option<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(f) = &self.feature {
            cfg.feature = f.parse::<FeatureSet>()?;
        }
        if let Some(m) = &self.model {
            let kind = m.parse::<RegressorKind>()?;
            if kind != cfg.model {
                cfg.grid = None;
            }
            cfg.model = kind;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
    wall_time_s: f64,
    outputs: Vec<String>,
    details: T,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            dir: cfg.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            written: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.path(name), value)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.path(name), text.as_bytes())
    }

    fn finish<T: Serialize>(self, command: &'static str, cfg: &RunConfig, clock: Instant, details: T) -> Result<()> {
        let m = Manifest {
            tool: "mldbfm",
            version: VERSION,
            command,
            seed: cfg.seed,
            config: cfg,
            wall_time_s: clock.elapsed().as_secs_f64(),
            outputs: self.written,
            details,
        };
        write_json(&self.dir.join(MANIFEST), &m)?;
        info!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn predictions_csv(run: &RunOutput) -> Result<String> {
    let labels = &run.decoder.labels;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["task".to_string(), "row".to_string()];
    header.extend(labels.iter().map(|l| format!("true_{l}")));
    header.extend(labels.iter().map(|l| format!("pred_{l}")));
    w.write_record(&header).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut row = 0;
    for (task, &len) in run.manifest.tasks.iter().zip(&run.test_segments) {
        for i in 0..len {
            let mut rec = vec![task.clone(), i.to_string()];
            rec.extend(run.targets.row(row).iter().map(|v| v.to_string()));
            rec.extend(run.predictions.row(row).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| Error::InvalidInput(e.to_string()))?;
            row += 1;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn targets_csv(labels: &[String], y: &Array2<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(labels).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for r in y.rows() {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn cmd_synth(c: &Common) -> Result<()> {
    let clock = Instant::now();
    let cfg = c.config()?;
    let synth = cfg.seeded_synth();
    let dir = Outputs::new(&cfg).dir;
    let mut dataset = write_synth_dataset(&dir, &synth)?;
    // the dataset manifest doubles as the command manifest
    dataset.wall_time_s = Some(clock.elapsed().as_secs_f64());
    write_json(&dir.join(MANIFEST), &dataset)?;
    info!("wrote {} synthetic tasks to {}", dataset.tasks.len(), dir.display());
    Ok(())
}

fn cmd_extract(c: &Common) -> Result<()> {
    let clock = Instant::now();
    let cfg = c.config()?;
    let source = open_source(&cfg)?;
    let tasks = prepare_features(source.as_ref(), &cfg.preprocess, &[cfg.feature_request()])?.remove(0);
    let mut out = Outputs::new(&cfg);
    for (i, t) in tasks.iter().enumerate() {
        let stem = format!("{i:02}_{}", t.name);
        write_features_binary(&out.path(&format!("{stem}.features.json")), &t.features)?;
        out.written.push(format!("{stem}.features.f32"));
        out.text(&format!("{stem}.targets.csv"), &targets_csv(&t.labels, &t.targets)?)?;
    }
    let details = serde_json::json!({
        "request": cfg.feature_request(),
        "source": source.describe(),
        "tasks": tasks.iter().map(|t| serde_json::json!({
            "name": t.name, "rows": t.features.n_rows(), "columns": t.features.n_cols(), "pred_rate_hz": t.pred_rate,
        })).collect::<Vec<_>>(),
    });
    out.finish("extract", &cfg, clock, details)
}

fn cmd_run(c: &Common, command: &'static str) -> Result<()> {
    let clock = Instant::now();
    let cfg = c.config()?;
    let source = open_source(&cfg)?;
    let run = run_with_source(&cfg, source.as_ref())?;
    info!("{command}: r2_vw = {:.4} with {:?}", run.report.r2_vw, run.manifest.selected);
    let mut out = Outputs::new(&cfg);
    out.json("metrics.json", &run.report)?;
    if command == "train" {
        out.json("model.json", &run.decoder)?;
        out.json("cv.json", &run.manifest.cv)?;
    } else {
        out.text("predictions.csv", &predictions_csv(&run)?)?;
    }
    out.finish(command, &cfg, clock, &run.manifest)
}

fn cmd_sweep(c: &Common, param: &str) -> Result<()> {
    let clock = Instant::now();
    let cfg = c.config()?;
    let param: SweepParam = param.parse()?;
    let source = open_source(&cfg)?;
    let table = sweep(&cfg, param, source.as_ref())?;
    let failed = table.rows.iter().filter(|r| r.report.is_none()).count();
    let mut out = Outputs::new(&cfg);
    out.text(&format!("sweep_{param}.csv"), &table.to_csv()?)?;
    let details = serde_json::json!({ "param": param, "values": param.values(), "failed": failed, "source": source.describe() });
    out.finish("sweep", &cfg, clock, details)
}

fn cmd_sfbs(c: &Common, steps: Option<usize>) -> Result<()> {
    let clock = Instant::now();
    let cfg = c.config()?;
    if cfg.feature != FeatureSet::MldBfm {
        return Err(Error::Config("sfbs needs block features (feature = mld-bfm)".into()));
    }
    let source = open_source(&cfg)?;
    let tasks = prepare_features(source.as_ref(), &cfg.preprocess, &[cfg.feature_request()])?.remove(0);
    let plan = plan_blocks(&tasks[0].grids, cfg.block_size, cfg.block_step)?;
    let result = sfbs(&cfg, &tasks, steps)?;
    let map = contribution_map(&result, &plan)?;
    let mut out = Outputs::new(&cfg);
    out.text("sfbs.csv", &result.to_csv(&plan)?)?;
    out.text("contributions.csv", &map.to_csv()?)?;
    out.json("contributions.json", &map)?;
    for g in &map.grids {
        info!("{} centroid {:?}", g.grid, g.centroid);
    }
    let details = serde_json::json!({ "result": result, "plan": plan, "source": source.describe() });
    out.finish("sfbs", &cfg, clock, details)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::Extract(c) => cmd_extract(c),
        Command::Train(c) => cmd_run(c, "train"),
        Command::Evaluate(c) => cmd_run(c, "evaluate"),
        Command::Sweep { common, param } => cmd_sweep(common, param),
        Command::Sfbs { common, steps } => cmd_sfbs(common, *steps),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Sequential forward block selection and electrode contribution maps.
//!
//! Each step refits the regressor on the selected blocks plus one candidate
//! and scores R2_vw on the held-out half. With Ridge every candidate reuses
//! one set of normal equations built over all columns; a sub-block of that
//! Gram matrix is bit-identical to the Gram matrix of the subset, so the
//! recorded scores equal from-scratch pipeline runs exactly.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::BlockPlan;
use crate::error::{Error, Result, StageExt};
use crate::metrics::evaluate;
use crate::pipeline::{csv_err, postprocess_segments, run_from_features, sequence_parts, split_tasks, RunConfig, TaskFeatures};
use crate::regression::{
    fit, grid_search_cv, reconstruct_series, Hyper, Model, OutputScaler, RidgeSystem, ScalerPair, SequencePlan,
};
use crate::seed::child_seed;
use crate::signal::assemble_split;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfbsStep {
    pub block: usize,
    /// Test R2_vw after adding `block`; `None` if every candidate failed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfbsResult {
    pub hyper: Hyper,
    pub seed: u64,
    pub n_blocks: usize,
    pub steps: Vec<SfbsStep>,
}

impl SfbsResult {
    pub fn order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.block).collect()
    }

    /// Clamped increments `max(s_n - s_{n-1}, 0)` with `s_0 = 0`. A failed
    /// step gains nothing and leaves the running score unchanged.
    pub fn gains(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.steps
            .iter()
            .map(|s| match s.score {
                Some(v) => {
                    let g = (v - prev).max(0.0);
                    prev = v;
                    g
                }
                None => 0.0,
            })
            .collect()
    }

    /// `step,block,grid,row,col,score,gain`; block positions are 1-indexed.
    pub fn to_csv(&self, plan: &BlockPlan) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "block", "grid", "row", "col", "score", "gain"]).map_err(csv_err)?;
        for (i, (step, gain)) in self.steps.iter().zip(self.gains()).enumerate() {
            let b = lookup(plan, step.block)?;
            w.write_record([
                (i + 1).to_string(),
                step.block.to_string(),
                plan.grids[b.grid].name.clone(),
                (b.row + 1).to_string(),
                (b.col + 1).to_string(),
                step.score.map(|s| s.to_string()).unwrap_or_default(),
                gain.to_string(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

fn lookup(plan: &BlockPlan, id: usize) -> Result<&crate::blocks::Block> {
    plan.blocks
        .iter()
        .find(|b| b.id == id)
        .ok_or_else(|| Error::OutOfRange(format!("block {id} not in plan")))
}

/// Split, sequenced and scaled data shared by every candidate fit.
struct Problem {
    xs: Array2<f64>,
    ys: Array2<f64>,
    xt: Array2<f64>,
    targets: Array2<f64>,
    segments: Vec<usize>,
    output: OutputScaler,
    /// Feature columns of each block, in tensor order.
    groups: BTreeMap<usize, Vec<usize>>,
    n_feat: usize,
    n_win: usize,
    labels: Vec<String>,
    rate: f64,
    system: Option<RidgeSystem>,
}

impl Problem {
    fn new(cfg: &RunConfig, tasks: &[TaskFeatures]) -> Result<Self> {
        let first = tasks.first().ok_or_else(|| Error::InvalidInput("no tasks".into()))?;
        let groups: BTreeMap<usize, Vec<usize>> = first.features.block_groups().into_iter().collect();
        if groups.is_empty() {
            return Err(Error::Config(format!("{} features carry no block structure", cfg.feature)));
        }
        let split = split_tasks(cfg, tasks).stage("split")?;
        let (train, plan) = sequence_parts(&split.train, cfg.n_win).stage("sequences")?;
        let (test, _) = sequence_parts(&split.test, cfg.n_win).stage("sequences")?;
        let set = assemble_split(&train, &test, cfg.seed).stage("split")?;
        let scalers = ScalerPair::fit(set.train.x.view(), set.train.y.view()).stage("scale")?;
        let xs = scalers.input.transform(set.train.x.view()).stage("scale")?;
        let ys = scalers.output.transform(set.train.y.view());
        let xt = scalers.input.transform(set.test.x.view()).stage("scale")?;
        let targets = reconstruct_series(set.test.y.view(), &plan)?;
        Ok(Self {
            xs,
            ys,
            xt,
            targets,
            segments: set.test_segments,
            output: scalers.output,
            groups,
            n_feat: plan.n_feat,
            n_win: cfg.n_win,
            labels: split.labels,
            rate: split.pred_rate,
            system: None,
        })
    }

    /// Sequence columns of `blocks`: window-major, then blocks in the given order.
    fn columns(&self, blocks: &[usize]) -> Result<Vec<usize>> {
        let mut cols = Vec::new();
        for k in 0..self.n_win {
            for b in blocks {
                let g = self.groups.get(b).ok_or_else(|| Error::OutOfRange(format!("block {b} has no features")))?;
                cols.extend(g.iter().map(|j| k * self.n_feat + j));
            }
        }
        Ok(cols)
    }

    fn score(&self, hyper: &Hyper, seed: u64, blocks: &[usize]) -> Result<f64> {
        let cols = self.columns(blocks)?;
        let model = match (hyper, &self.system) {
            (Hyper::Ridge { alpha }, Some(sys)) if cols.len() <= self.xs.nrows() => Model::Ridge(sys.subset(&cols)?.solve(*alpha)?),
            _ => fit(hyper, self.xs.select(Axis(1), &cols).view(), self.ys.view(), seed)?,
        };
        let pred = model.predict(self.xt.select(Axis(1), &cols).view())?;
        let plan = SequencePlan::new(self.n_win, cols.len() / self.n_win, self.labels.len())?;
        let mut pred = reconstruct_series(self.output.inverse(pred.view()).view(), &plan)?;
        postprocess_segments(&mut pred, &self.segments, self.rate)?;
        Ok(evaluate(self.targets.view(), pred.view(), &self.labels)?.r2_vw)
    }
}

/// Seed a single-point grid search would hand to its only grid point.
fn fit_seed(cfg: &RunConfig) -> u64 {
    child_seed(cfg.seed, 0)
}

/// Greedy selection with a fixed regressor. `limit` stops after that many
/// steps; `None` runs until every block is selected.
pub fn sfbs_with(cfg: &RunConfig, tasks: &[TaskFeatures], hyper: Hyper, limit: Option<usize>) -> Result<SfbsResult> {
    cfg.validate()?;
    let mut problem = Problem::new(cfg, tasks)?;
    if matches!(hyper, Hyper::Ridge { .. }) {
        problem.system = Some(RidgeSystem::primal(problem.xs.view(), problem.ys.view()).stage("fit")?);
    }
    let seed = fit_seed(cfg);
    let n_blocks = problem.groups.len();
    let mut remaining: Vec<usize> = problem.groups.keys().copied().collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let n_steps = limit.map_or(n_blocks, |l| l.min(n_blocks));
    while steps.len() < n_steps {
        let scores: Vec<Option<f64>> = remaining
            .par_iter()
            .map(|&b| {
                let mut trial = selected.clone();
                trial.push(b);
                match problem.score(&hyper, seed, &trial) {
                    Ok(s) if s.is_finite() => Some(s),
                    Ok(_) => None,
                    Err(e) => {
                        log::debug!("candidate block {b} failed: {e}");
                        None
                    }
                }
            })
            .collect();
        // remaining is ascending, so a strict comparison keeps the lowest id on ties
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if s.unwrap_or(f64::NEG_INFINITY) > scores[best].unwrap_or(f64::NEG_INFINITY) {
                best = i;
            }
        }
        let block = remaining.remove(best);
        selected.push(block);
        steps.push(SfbsStep {
            block,
            score: scores[best],
        });
        log::info!("sfbs step {}: block {block} -> {:?}", steps.len(), scores[best]);
    }
    Ok(SfbsResult {
        hyper,
        seed,
        n_blocks,
        steps,
    })
}

/// Pick the regressor once by cross-validation on every block, then run the
/// greedy selection with it held fixed.
pub fn sfbs(cfg: &RunConfig, tasks: &[TaskFeatures], limit: Option<usize>) -> Result<SfbsResult> {
    cfg.validate()?;
    let problem = Problem::new(cfg, tasks)?;
    let fitted = grid_search_cv(&cfg.grid(), problem.xs.view(), problem.ys.view(), cfg.cv_folds, cfg.seed).stage("fit")?;
    drop(problem);
    sfbs_with(cfg, tasks, fitted.hyper, limit)
}

/// Full pipeline run restricted to `blocks` (in that order) with `hyper` as
/// the only grid point.
pub fn subset_score(cfg: &RunConfig, tasks: &[TaskFeatures], hyper: Hyper, blocks: &[usize]) -> Result<f64> {
    let subset = tasks
        .iter()
        .map(|t| {
            let groups: BTreeMap<usize, Vec<usize>> = t.features.block_groups().into_iter().collect();
            let mut cols = Vec::new();
            for b in blocks {
                cols.extend(groups.get(b).ok_or_else(|| Error::OutOfRange(format!("block {b} has no features")))?);
            }
            Ok(TaskFeatures {
                features: t.features.select_columns(&cols)?,
                ..t.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = RunConfig {
        grid: Some(vec![hyper]),
        model: hyper.kind(),
        ..cfg.clone()
    };
    Ok(run_from_features(&cfg, &subset)?.report.r2_vw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridContribution {
    pub grid: String,
    /// Peak-normalized contribution per electrode, `n_rows x n_cols`.
    #[serde(with = "crate::serde_matrix")]
    pub values: Array2<f64>,
    /// Contribution-weighted `(row, col)`, 1-indexed; `None` for an all-zero map.
    pub centroid: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionMap {
    pub grids: Vec<GridContribution>,
}

impl ContributionMap {
    /// One line per electrode: `grid,row,col,value` with 1-indexed positions.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["grid", "row", "col", "value"]).map_err(csv_err)?;
        for g in &self.grids {
            for ((r, c), v) in g.values.indexed_iter() {
                w.write_record([g.grid.clone(), (r + 1).to_string(), (c + 1).to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Spread each step's clamped gain over the electrodes of its block, then
/// normalize every grid to a peak of 1.
pub fn contribution_map(result: &SfbsResult, plan: &BlockPlan) -> Result<ContributionMap> {
    let mut maps: Vec<Array2<f64>> = plan.grids.iter().map(|g| Array2::zeros((g.n_rows, g.n_cols))).collect();
    for (step, gain) in result.steps.iter().zip(result.gains()) {
        let b = lookup(plan, step.block)?;
        let grid = &plan.grids[b.grid];
        for &ch in &b.channels {
            let (r, c) = grid
                .position(ch)
                .ok_or_else(|| Error::InvalidInput(format!("channel {ch} outside grid {}", grid.name)))?;
            maps[b.grid][[r, c]] += gain;
        }
    }
    let grids = plan
        .grids
        .iter()
        .zip(maps)
        .map(|(g, mut m)| {
            let peak = m.iter().fold(0.0f64, |a, &v| a.max(v));
            let centroid = (peak > 0.0).then(|| {
                m.mapv_inplace(|v| v / peak);
                let total = m.sum();
                let (mut r, mut c) = (0.0, 0.0);
                for ((i, j), v) in m.indexed_iter() {
                    r += v * (i + 1) as f64;
                    c += v * (j + 1) as f64;
                }
                [r / total, c / total]
            });
            if centroid.is_none() {
                log::warn!("grid {} received no contribution; centroid undefined", g.name);
            }
            GridContribution {
                grid: g.name.clone(),
                values: m,
                centroid,
            }
        })
        .collect();
    Ok(ContributionMap { grids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::plan_blocks;
    use crate::signal::default_grids;

    fn result(steps: &[(usize, f64)]) -> SfbsResult {
        SfbsResult {
            hyper: Hyper::Ridge { alpha: 1.0 },
            seed: 0,
            n_blocks: 98,
            steps: steps.iter().map(|&(block, s)| SfbsStep { block, score: Some(s) }).collect(),
        }
    }

    #[test]
    fn gains_are_clamped_increments() {
        let r = result(&[(3, 0.4), (1, 0.7), (2, 0.65), (0, 0.8)]);
        let g = r.gains();
        assert_eq!(g[0], 0.4);
        assert!((g[1] - 0.3).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        assert!((g[3] - 0.15).abs() < 1e-12);
        let neg = result(&[(0, -0.5)]);
        assert_eq!(neg.gains(), vec![0.0]);
    }

    #[test]
    fn top_left_block_map() {
        let plan = plan_blocks(&default_grids(), 2, 1).unwrap();
        let map = contribution_map(&result(&[(0, 0.5)]), &plan).unwrap();
        let edc = &map.grids[0];
        assert_eq!(edc.values.sum(), 4.0);
        assert_eq!(edc.values[[0, 0]], 1.0);
        assert_eq!(edc.values[[1, 1]], 1.0);
        assert_eq!(edc.centroid, Some([1.5, 1.5]));
        assert_eq!(map.grids[1].centroid, None);
        assert_eq!(map.grids[1].values.sum(), 0.0);
    }

    #[test]
    fn uniform_tiling_centres_the_centroid() {
        let plan = plan_blocks(&default_grids(), 2, 2).unwrap();
        let steps: Vec<(usize, f64)> = (0..16).map(|i| (i, 0.1 * (i + 1) as f64)).collect();
        let map = contribution_map(&result(&steps), &plan).unwrap();
        let [r, c] = map.grids[0].centroid.unwrap();
        assert!((r - 4.5).abs() < 1e-12 && (c - 4.5).abs() < 1e-12);
        assert!(map.grids[0].values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn csv_layouts() {
        let plan = plan_blocks(&default_grids(), 2, 1).unwrap();
        let r = result(&[(50, 0.25)]);
        let text = r.to_csv(&plan).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1,50,FDS,1,2,0.25,0.25");
        let map = contribution_map(&r, &plan).unwrap().to_csv().unwrap();
        assert_eq!(map.lines().count(), 129);
        assert!(map.contains("FDS,2,3,1\n"));
    }
}

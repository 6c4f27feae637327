//! Per-DoF accuracy metrics and their variance-weighted aggregates.

use log::warn;
use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::ShapeMismatch(format!("{} targets vs {} predictions", y.len(), yhat.len())));
    }
    if y.len() < 2 {
        return Err(Error::InvalidInput("at least two samples are required".into()));
    }
    Ok(())
}

fn mean(v: ArrayView1<'_, f64>) -> f64 {
    v.sum() / v.len() as f64
}

/// Population variance.
pub fn variance(v: ArrayView1<'_, f64>) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Coefficient of determination; `None` when the target is constant.
pub fn r2_pred(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<Option<f64>> {
    check_pair(y, yhat)?;
    let m = mean(y);
    let sst: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if sst <= 0.0 {
        return Ok(None);
    }
    let sse: f64 = y.iter().zip(yhat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(1.0 - sse / sst))
}

pub fn rmse(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<f64> {
    check_pair(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

pub fn mae(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Pearson correlation; `None` if either series is constant.
pub fn pearson(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<Option<f64>> {
    check_pair(y, yhat)?;
    let (my, mh) = (mean(y), mean(yhat));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat.iter()) {
        let (da, db) = (a - my, b - mh);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

fn check_matrices(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<()> {
    if y.dim() != yhat.dim() {
        return Err(Error::ShapeMismatch(format!("targets {:?} vs predictions {:?}", y.dim(), yhat.dim())));
    }
    Ok(())
}

/// Variance-weighted R2 over outputs. Constant outputs are left out.
pub fn r2_vw(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<f64> {
    check_matrices(y, yhat)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (col, pcol) in y.columns().into_iter().zip(yhat.columns()) {
        if let Some(r2) = r2_pred(col, pcol)? {
            let var = variance(col);
            num += var * r2;
            den += var;
        }
    }
    if den <= 0.0 {
        return Err(Error::InvalidInput("every output has zero variance".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofMetrics {
    pub label: String,
    pub variance: f64,
    pub r2: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dofs: Vec<DofMetrics>,
    pub r2_vw: f64,
    pub rmse_vw: f64,
    pub mae_vw: f64,
    pub r_vw: Option<f64>,
}

/// Full report; aggregates weight each DoF by its target variance.
pub fn evaluate(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>, labels: &[String]) -> Result<MetricsReport> {
    check_matrices(y, yhat)?;
    if labels.len() != y.ncols() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} outputs", labels.len(), y.ncols())));
    }
    let mut dofs = Vec::with_capacity(labels.len());
    for ((col, pcol), label) in y.columns().into_iter().zip(yhat.columns()).zip(labels) {
        let r2 = r2_pred(col, pcol)?;
        if r2.is_none() {
            warn!("output {label} has zero variance; left out of the weighted R2");
        }
        dofs.push(DofMetrics {
            label: label.clone(),
            variance: variance(col),
            r2,
            rmse: rmse(col, pcol)?,
            mae: mae(col, pcol)?,
            pearson: pearson(col, pcol)?,
        });
    }
    let weighted = |f: &dyn Fn(&DofMetrics) -> Option<f64>| -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for d in &dofs {
            if let (Some(v), true) = (f(d), d.variance > 0.0) {
                num += d.variance * v;
                den += d.variance;
            }
        }
        (den > 0.0).then(|| num / den)
    };
    let r2_vw = weighted(&|d| d.r2).ok_or_else(|| Error::InvalidInput("every output has zero variance".into()))?;
    Ok(MetricsReport {
        r2_vw,
        rmse_vw: weighted(&|d| Some(d.rmse)).unwrap_or(f64::NAN),
        mae_vw: weighted(&|d| Some(d.mae)).unwrap_or(f64::NAN),
        r_vw: weighted(&|d| d.pearson),
        dofs,
    })
}

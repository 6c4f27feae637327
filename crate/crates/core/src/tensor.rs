//! Window-by-feature matrices with per-column provenance.

use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Effective field strength of a block.
    Sigma,
    /// Field-strength variation rate of a block (Hz).
    Phi,
    /// Spatial complexity of a block.
    Omega,
    Rms,
    Mav,
    Wl,
    Pca,
    Nmf,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Sigma => "sigma",
            FeatureKind::Phi => "phi",
            FeatureKind::Omega => "omega",
            FeatureKind::Rms => "rms",
            FeatureKind::Mav => "mav",
            FeatureKind::Wl => "wl",
            FeatureKind::Pca => "pca",
            FeatureKind::Nmf => "nmf",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sigma" => FeatureKind::Sigma,
            "phi" => FeatureKind::Phi,
            "omega" => FeatureKind::Omega,
            "rms" => FeatureKind::Rms,
            "mav" => FeatureKind::Mav,
            "wl" => FeatureKind::Wl,
            "pca" => FeatureKind::Pca,
            "nmf" => FeatureKind::Nmf,
            _ => return None,
        })
    }
}

/// Where a feature column came from: a block, a channel or a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Block(usize),
    Channel(usize),
    Component(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnTag {
    pub source: Source,
    pub kind: FeatureKind,
}

impl ColumnTag {
    pub fn block(id: usize, kind: FeatureKind) -> Self {
        Self {
            source: Source::Block(id),
            kind,
        }
    }

    pub fn channel(ch: usize, kind: FeatureKind) -> Self {
        Self {
            source: Source::Channel(ch),
            kind,
        }
    }

    pub fn component(i: usize, kind: FeatureKind) -> Self {
        Self {
            source: Source::Component(i),
            kind,
        }
    }

    pub fn block_id(&self) -> Option<usize> {
        match self.source {
            Source::Block(b) => Some(b),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnTag {
    /// `b12:sigma`, `ch3:rms`, `c0:pca`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.source {
            Source::Block(b) => write!(f, "b{b}:{}", self.kind.as_str()),
            Source::Channel(c) => write!(f, "ch{c}:{}", self.kind.as_str()),
            Source::Component(c) => write!(f, "c{c}:{}", self.kind.as_str()),
        }
    }
}

impl std::str::FromStr for ColumnTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("malformed column tag {s:?}"));
        let (src, kind) = s.split_once(':').ok_or_else(bad)?;
        let kind = FeatureKind::parse(kind).ok_or_else(bad)?;
        let num = |p: &str| src[p.len()..].parse::<usize>().map_err(|_| bad());
        let source = if src.starts_with("ch") {
            Source::Channel(num("ch")?)
        } else if src.starts_with('b') {
            Source::Block(num("b")?)
        } else if src.starts_with('c') {
            Source::Component(num("c")?)
        } else {
            return Err(bad());
        };
        Ok(ColumnTag { source, kind })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    values: Array2<f64>,
    columns: Vec<ColumnTag>,
}

impl FeatureTensor {
    pub fn new(values: Array2<f64>, columns: Vec<ColumnTag>) -> Result<Self> {
        if values.ncols() != columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns but {} provenance tags",
                values.ncols(),
                columns.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(columns.len());
        for c in &columns {
            if !seen.insert(*c) {
                return Err(Error::InvalidInput(format!("duplicate column tag {c}")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature value at flat index {pos}"
            )));
        }
        Ok(Self { values, columns })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn columns(&self) -> &[ColumnTag] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Column indices grouped by block id, in block order.
    pub fn block_groups(&self) -> Vec<(usize, Vec<usize>)> {
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, c) in self.columns.iter().enumerate() {
            if let Some(b) = c.block_id() {
                match groups.iter_mut().find(|(id, _)| *id == b) {
                    Some((_, cols)) => cols.push(i),
                    None => groups.push((b, vec![i])),
                }
            }
        }
        groups.sort_by_key(|(b, _)| *b);
        groups
    }

    /// Sub-tensor with the given columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<FeatureTensor> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_cols()) {
            return Err(Error::OutOfRange(format!("column {bad} of {}", self.n_cols())));
        }
        FeatureTensor::new(
            self.values.select(Axis(1), idx),
            idx.iter().map(|&i| self.columns[i]).collect(),
        )
    }

    /// Stack row-wise; all tensors must share the column layout.
    pub fn vstack(parts: &[FeatureTensor]) -> Result<FeatureTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to stack".into()))?;
        if parts.iter().any(|p| p.columns != first.columns) {
            return Err(Error::ShapeMismatch("column layouts differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(FeatureTensor {
            values,
            columns: first.columns.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_strings_round_trip() {
        for tag in [
            ColumnTag::block(12, FeatureKind::Omega),
            ColumnTag::channel(3, FeatureKind::Wl),
            ColumnTag::component(0, FeatureKind::Pca),
        ] {
            assert_eq!(tag.to_string().parse::<ColumnTag>().unwrap(), tag);
        }
        assert_eq!(ColumnTag::block(2, FeatureKind::Sigma).to_string(), "b2:sigma");
        assert!("x1:rms".parse::<ColumnTag>().is_err());
        assert!("b1:foo".parse::<ColumnTag>().is_err());
    }

    #[test]
    fn rejects_duplicates_and_nan() {
        let tags = vec![ColumnTag::channel(0, FeatureKind::Rms); 2];
        assert!(FeatureTensor::new(Array2::zeros((2, 2)), tags).is_err());
        let mut v = Array2::zeros((2, 1));
        v[[1, 0]] = f64::NAN;
        assert!(FeatureTensor::new(v, vec![ColumnTag::channel(0, FeatureKind::Rms)]).is_err());
    }
}

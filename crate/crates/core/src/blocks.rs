//! Spatial blocks over electrode grids and overlapping temporal windows.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{GridLayout, SignalMatrix};

/// One B x B block of electrodes inside a single grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    /// Index into the grid list the plan was built from.
    pub grid: usize,
    /// Top-left electrode, 0-based.
    pub row: usize,
    pub col: usize,
    /// Channel indices in row-major order within the block.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub block_size: usize,
    pub step: usize,
    pub grids: Vec<GridLayout>,
    pub blocks: Vec<Block>,
}

impl BlockPlan {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Channels per block, `K = B^2`.
    pub fn block_channels(&self) -> usize {
        self.block_size * self.block_size
    }
}

/// Blocks per grid along one axis: `floor((n - B) / e) + 1`.
pub fn positions_per_axis(n: usize, block_size: usize, step: usize) -> usize {
    (n - block_size) / step + 1
}

/// Enumerate B x B blocks with step `e` over every grid (grids in declaration
/// order, then top-left corners row-major). Blocks never wrap around edges.
pub fn plan_blocks(grids: &[GridLayout], block_size: usize, step: usize) -> Result<BlockPlan> {
    if block_size == 0 {
        return Err(Error::InvalidSpec("block size must be at least 1".into()));
    }
    if step == 0 {
        return Err(Error::InvalidSpec("block step must be at least 1".into()));
    }
    let mut blocks = Vec::new();
    for (gi, g) in grids.iter().enumerate() {
        if block_size > g.n_rows.min(g.n_cols) {
            return Err(Error::InvalidSpec(format!(
                "block size {block_size} exceeds grid {} ({}x{})",
                g.name, g.n_rows, g.n_cols
            )));
        }
        let nr = positions_per_axis(g.n_rows, block_size, step);
        let nc = positions_per_axis(g.n_cols, block_size, step);
        for br in 0..nr {
            for bc in 0..nc {
                let (row, col) = (br * step, bc * step);
                let channels = (0..block_size)
                    .flat_map(|dr| (0..block_size).map(move |dc| (row + dr, col + dc)))
                    .map(|(r, c)| g.channel(r, c))
                    .collect();
                blocks.push(Block {
                    id: blocks.len(),
                    grid: gi,
                    row,
                    col,
                    channels,
                });
            }
        }
    }
    Ok(BlockPlan {
        block_size,
        step,
        grids: grids.to_vec(),
        blocks,
    })
}

/// Windows of `length` samples advancing by `length - overlap`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    length: usize,
    overlap: usize,
    starts: Vec<usize>,
}

impl WindowPlan {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn hop(&self) -> usize {
        self.length - self.overlap
    }

    pub fn count(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Rate at which windows (and hence predictions) are produced.
    pub fn rate(&self, fs: f64) -> f64 {
        fs / self.hop() as f64
    }
}

pub fn plan_windows(n_samples: usize, length: usize, overlap: usize) -> Result<WindowPlan> {
    if length == 0 {
        return Err(Error::InvalidSpec("window length must be at least one sample".into()));
    }
    if overlap >= length {
        return Err(Error::InvalidSpec(format!(
            "overlap {overlap} must be smaller than window length {length}"
        )));
    }
    if length > n_samples {
        return Err(Error::InvalidSpec(format!(
            "window length {length} exceeds the {n_samples} available samples"
        )));
    }
    let hop = length - overlap;
    let count = (n_samples - length) / hop + 1;
    Ok(WindowPlan {
        length,
        overlap,
        starts: (0..count).map(|w| w * hop).collect(),
    })
}

/// Seconds to samples, rounding to nearest.
pub fn seconds_to_samples(seconds: f64, fs: f64) -> usize {
    (seconds * fs).round().max(0.0) as usize
}

/// Window plan from lengths given in seconds.
pub fn plan_windows_seconds(n_samples: usize, length_s: f64, overlap_s: f64, fs: f64) -> Result<WindowPlan> {
    plan_windows(n_samples, seconds_to_samples(length_s, fs), seconds_to_samples(overlap_s, fs))
}

/// `X[t_w : t_w + L, I_b]` as an L x K matrix.
pub fn slice(x: &SignalMatrix, blocks: &BlockPlan, windows: &WindowPlan, w: usize, b: usize) -> Result<Array2<f64>> {
    let block = blocks
        .blocks
        .get(b)
        .ok_or_else(|| Error::OutOfRange(format!("block {b} of {}", blocks.n_blocks())))?;
    let start = *windows
        .starts
        .get(w)
        .ok_or_else(|| Error::OutOfRange(format!("window {w} of {}", windows.count())))?;
    let end = start + windows.length;
    if end > x.n_samples() {
        return Err(Error::OutOfRange(format!(
            "window {w} ends at {end}, recording has {} samples",
            x.n_samples()
        )));
    }
    if block.channels.iter().any(|&c| c >= x.n_channels()) {
        return Err(Error::OutOfRange(format!("block {b} addresses channels beyond the recording")));
    }
    Ok(x.data().slice(s![start..end, ..]).select(Axis(1), &block.channels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::default_grids;

    fn grid8() -> Vec<GridLayout> {
        vec![GridLayout::new("EDC", 8, 8, 0)]
    }

    #[test]
    fn block_counts() {
        assert_eq!(plan_blocks(&grid8(), 2, 1).unwrap().n_blocks(), 49);
        assert_eq!(plan_blocks(&grid8(), 3, 2).unwrap().n_blocks(), 9);
        let whole = plan_blocks(&default_grids(), 8, 1).unwrap();
        assert_eq!(whole.n_blocks(), 2);
        assert_eq!(whole.blocks[1].channels, (64..128).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_block_rejected() {
        assert!(matches!(plan_blocks(&grid8(), 9, 1), Err(Error::InvalidSpec(_))));
        assert!(plan_blocks(&grid8(), 0, 1).is_err());
        assert!(plan_blocks(&grid8(), 2, 0).is_err());
    }

    #[test]
    fn blocks_are_contiguous_rectangles_inside_one_grid() {
        let grids = vec![GridLayout::new("A", 4, 6, 0), GridLayout::new("B", 5, 3, 24)];
        let plan = plan_blocks(&grids, 3, 1).unwrap();
        for b in &plan.blocks {
            let g = &grids[b.grid];
            assert_eq!(b.channels.len(), 9);
            for (k, &ch) in b.channels.iter().enumerate() {
                assert_eq!(g.position(ch), Some((b.row + k / 3, b.col + k % 3)));
            }
        }
        // (2 * 4) + (3 * 1)
        assert_eq!(plan.n_blocks(), 11);
        assert!(plan.blocks.windows(2).all(|w| w[0].id + 1 == w[1].id));
    }

    #[test]
    fn window_counts() {
        let p = plan_windows(1000, 150, 50).unwrap();
        assert_eq!(p.count(), 9);
        assert_eq!(p.starts(), &[0, 100, 200, 300, 400, 500, 600, 700, 800]);
        assert_eq!(plan_windows(150, 150, 0).unwrap().count(), 1);
        assert!(matches!(plan_windows(1000, 150, 150), Err(Error::InvalidSpec(_))));
        assert!(matches!(plan_windows(100, 150, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn default_window_in_samples() {
        let fs = 2052.52;
        assert_eq!(seconds_to_samples(0.150, fs), 308);
        assert_eq!(seconds_to_samples(0.050, fs), 103);
    }

    #[test]
    fn slice_returns_block_channels() {
        let data = Array2::from_shape_fn((1000, 128), |(_, c)| c as f64);
        let x = SignalMatrix::new(data, 1000.0, default_grids()).unwrap();
        let bp = plan_blocks(x.grids(), 2, 1).unwrap();
        let wp = plan_windows(1000, 150, 50).unwrap();
        let seg = slice(&x, &bp, &wp, 0, 0).unwrap();
        assert_eq!(seg.dim(), (150, 4));
        for (k, &ch) in [0usize, 1, 8, 9].iter().enumerate() {
            assert!(seg.column(k).iter().all(|&v| v == ch as f64));
        }
        let last = slice(&x, &bp, &wp, 8, 97).unwrap();
        assert_eq!(last.dim(), (150, 4));
        assert!(matches!(slice(&x, &bp, &wp, 9, 0), Err(Error::OutOfRange(_))));
        assert!(matches!(slice(&x, &bp, &wp, 0, 98), Err(Error::OutOfRange(_))));

        let single = plan_blocks(x.grids(), 1, 1).unwrap();
        let seg = slice(&x, &single, &wp, 3, 70).unwrap();
        assert_eq!(seg.dim(), (150, 1));
        assert!(seg.iter().all(|&v| v == 70.0));
    }
}

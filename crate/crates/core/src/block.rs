//! Block-partitioned vectors and block-selection schedules.
//!
//! A [`BlockVector`] stores `n = n_1 + ... + n_b` reals contiguously, with
//! block `i` (1-based) occupying a fixed slice. Complex-valued blocks are
//! stored as interleaved `(re, im)` pairs, so every norm and inner product
//! here is the real Euclidean one, which equals the complex norm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Layout("at least one block is required".into()));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Layout(format!("block {} has size 0", pos + 1)));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Ok(Self {
            sizes,
            offsets,
            total,
        })
    }

    pub fn blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, i: usize) -> Result<usize> {
        self.check(i)?;
        Ok(self.sizes[i - 1])
    }

    /// Half-open coordinate range of block `i` (1-based).
    pub fn range(&self, i: usize) -> Result<std::ops::Range<usize>> {
        self.check(i)?;
        let start = self.offsets[i - 1];
        Ok(start..start + self.sizes[i - 1])
    }

    fn check(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.sizes.len() {
            Err(Error::BlockIndex {
                index: i,
                blocks: self.sizes.len(),
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVector {
    layout: BlockLayout,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn new(layout: BlockLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total() {
            return Err(Error::Length {
                expected: layout.total(),
                got: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: BlockLayout) -> Self {
        let data = vec![0.0; layout.total()];
        Self { layout, data }
    }

    /// Concatenates per-block vectors into a new block vector.
    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let layout = BlockLayout::new(blocks.iter().map(Vec::len).collect())?;
        let data = blocks.concat();
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Borrowed view of block `i`.
    pub fn block(&self, i: usize) -> Result<&[f64]> {
        Ok(&self.data[self.layout.range(i)?])
    }

    /// Owned copy of block `i` (`U_iᵀ x`).
    pub fn extract(&self, i: usize) -> Result<Vec<f64>> {
        self.block(i).map(<[f64]>::to_vec)
    }

    /// Returns a copy of `self` with block `i` replaced by `v` (`x + U_i (v - x_i)`).
    pub fn inject(&self, i: usize, v: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_block(i, v)?;
        Ok(out)
    }

    pub(crate) fn set_block(&mut self, i: usize, v: &[f64]) -> Result<()> {
        let range = self.layout.range(i)?;
        if v.len() != range.len() {
            return Err(Error::Length {
                expected: range.len(),
                got: v.len(),
            });
        }
        self.data[range].copy_from_slice(v);
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        distance(&self.data, &other.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `i_k = 1 + mod(k - 1, b)`.
    Sequential,
    /// Each epoch of `b` iterations visits a fresh seeded permutation.
    EpochShuffle,
    /// Indices drawn i.i.d. uniform on `{1, ..., b}`.
    RandomIid,
}

/// A block-selection rule. Index streams are pure functions of
/// `(kind, seed, blocks, k)`; no generator state is carried between calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub kind: ScheduleKind,
    pub seed: u64,
    pub blocks: usize,
}

impl BlockSchedule {
    pub fn new(kind: ScheduleKind, blocks: usize, seed: u64) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::Layout("schedule needs at least one block".into()));
        }
        Ok(Self { kind, seed, blocks })
    }

    pub fn sequential(blocks: usize) -> Result<Self> {
        Self::new(ScheduleKind::Sequential, blocks, 0)
    }

    /// Block index (1-based) selected at iteration `k >= 1`.
    pub fn index(&self, k: usize) -> usize {
        let b = self.blocks;
        let k0 = k.saturating_sub(1);
        match self.kind {
            ScheduleKind::Sequential => 1 + k0 % b,
            ScheduleKind::EpochShuffle => {
                let epoch = (k0 / b) as u64;
                self.epoch_order(epoch)[k0 % b]
            }
            ScheduleKind::RandomIid => {
                let mut r = rng::stream(&[self.seed, 0x11d, k as u64]);
                1 + r.random_range(0..b)
            }
        }
    }

    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (1..=self.blocks).collect();
        let mut r = rng::stream(&[self.seed, 0x5f1e, epoch]);
        // Fisher-Yates
        for i in (1..order.len()).rev() {
            let j = r.random_range(0..=i);
            order.swap(i, j);
        }
        order
    }
}

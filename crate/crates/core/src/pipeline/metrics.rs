//! Ranking metrics, score fusion and separation statistics.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Smallest standard deviation used when standardizing a score row.
pub const STD_FLOOR: f64 = 1e-12;

/// 1-based rank of `scores[positive]` when sorted descending. Ties count
/// against the positive: every candidate scoring at least as high is ahead
/// of or level with it.
pub fn rank_of(scores: &[f64], positive: usize) -> Result<usize> {
    if positive >= scores.len() {
        bail!(Contract, "positive index {positive} outside {} scores", scores.len());
    }
    let p = scores[positive];
    if p.is_nan() {
        bail!(Numeric, "positive score is NaN");
    }
    Ok(scores.iter().filter(|&&s| s >= p).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub rsum: f64,
    pub mdr: f64,
    pub mnr: f64,
}

impl RetrievalMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            bail!(Input, "no ranks to summarize");
        }
        if ranks.contains(&0) {
            bail!(Contract, "ranks are 1-based");
        }
        let n = ranks.len() as f64;
        let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        let (r1, r5, r10) = (recall(1), recall(5), recall(10));
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable();
        let m = sorted.len();
        let mdr = if m % 2 == 1 {
            sorted[m / 2] as f64
        } else {
            (sorted[m / 2 - 1] + sorted[m / 2]) as f64 / 2.0
        };
        Ok(Self {
            r1,
            r5,
            r10,
            rsum: r1 + r5 + r10,
            mdr,
            mnr: ranks.iter().sum::<usize>() as f64 / n,
        })
    }

    /// The identities every report satisfies.
    pub fn check(&self) -> Result<()> {
        let ok = self.r1 <= self.r5
            && self.r5 <= self.r10
            && self.r10 <= 100.0
            && self.r1 >= 0.0
            && (self.rsum - (self.r1 + self.r5 + self.r10)).abs() < 1e-9
            && self.mdr >= 1.0
            && self.mnr >= 1.0;
        if !ok {
            bail!(Numeric, "metric identities violated: {self:?}");
        }
        Ok(())
    }
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(STD_FLOOR);
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// `(1 − w)·z(sim) + w·z(prob)` with `z` the per-row standardization.
pub fn fuse_scores(sim: &[f64], prob: &[f64], w: f64) -> Result<Vec<f64>> {
    if sim.len() != prob.len() {
        bail!(Contract, "similarity row has {} entries, distribution has {}", sim.len(), prob.len());
    }
    if sim.is_empty() {
        bail!(Input, "nothing to fuse");
    }
    if !(0.0..=1.0).contains(&w) {
        bail!(Config, "fusion weight {w} outside [0, 1]");
    }
    let (zs, zp) = (standardize(sim), standardize(prob));
    Ok(zs.iter().zip(&zp).map(|(a, b)| (1.0 - w) * a + w * b).collect())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        bail!(Input, "AUROC needs both positive and negative scores");
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        bail!(Numeric, "AUROC over NaN scores");
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // midranks over tied groups
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * all[i..=j].iter().filter(|(_, p)| *p).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; values outside go to the end bins.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            bail!(Config, "histogram needs at least one bin");
        }
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v - lo) / width).floor();
            let b = if b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
            counts[b] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

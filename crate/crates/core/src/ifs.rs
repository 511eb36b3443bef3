//! Interval frame sampling.
//!
//! Step I picks `p` frames per video once, before training. Step II picks `q`
//! of those `p` afresh every epoch. Both split their input into equal-ish
//! intervals `[⌊i·N/k⌋, ⌊(i+1)·N/k⌋)` and take one frame from each.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pointcloud::PointCloudVideo;
use crate::seed::{self, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalMode {
    /// Uniform choice inside each interval from a stream seeded with the value.
    Random(u64),
    /// `⌊(lo + hi − 1) / 2⌋` of each interval.
    Midpoint,
}

/// How clips are drawn from a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Ifs,
    /// The same `k` evenly spaced frames every epoch, no Step II.
    FixedUniform(usize),
}

/// Interval bounds `[lo, hi)` for interval `i` of `k` over `n` items.
pub fn interval_bounds(n: usize, k: usize, i: usize) -> (usize, usize) {
    (i * n / k, (i + 1) * n / k)
}

/// One index per interval. When `n < k` some intervals are empty and reuse
/// their start, clamped to `n − 1`.
pub fn interval_indices(n: usize, k: usize, mode: IntervalMode) -> Result<Vec<usize>> {
    if n == 0 || k == 0 {
        return Err(CoreError::Contract(format!("interval sampling needs n, k >= 1 (n={n}, k={k})")));
    }
    let mut rng = match mode {
        IntervalMode::Random(s) => Some(seed::rng(s, Stage::ClipSampling, "interval", 0)),
        IntervalMode::Midpoint => None,
    };
    Ok((0..k)
        .map(|i| {
            let (lo, hi) = interval_bounds(n, k, i);
            if hi <= lo {
                return lo.min(n - 1);
            }
            match rng.as_mut() {
                Some(r) => r.gen_range(lo..hi),
                None => (lo + hi - 1) / 2,
            }
        })
        .collect())
}

/// The `p` frames of a video kept for the whole run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipPool {
    pub source_id: String,
    pub frame_indices: Vec<usize>,
}

impl ClipPool {
    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }
}

pub fn ifs_step1(video: &PointCloudVideo, p: usize, dataset_seed: u64) -> Result<ClipPool> {
    if video.frames.is_empty() {
        return Err(CoreError::Contract(format!("video {} has no frames", video.source_id)));
    }
    let s = seed::derive(dataset_seed, Stage::PoolSampling, &video.source_id, 0);
    Ok(ClipPool {
        source_id: video.source_id.clone(),
        frame_indices: interval_indices(video.frames.len(), p, IntervalMode::Random(s))?,
    })
}

/// Pool positions of the `q` frames used for one pass. Training draws depend
/// on `(run_seed, epoch, source)`; evaluation takes interval midpoints and
/// ignores the epoch.
pub fn ifs_step2(pool: &ClipPool, q: usize, epoch: u64, run_seed: u64, eval_mode: bool) -> Result<Vec<usize>> {
    if q > pool.len() {
        return Err(CoreError::Contract(format!("bottom rate {q} exceeds pool size {}", pool.len())));
    }
    let mode = if eval_mode {
        IntervalMode::Midpoint
    } else {
        IntervalMode::Random(seed::derive(run_seed, Stage::ClipSampling, &pool.source_id, epoch))
    };
    interval_indices(pool.len(), q, mode)
}

/// Pool for fixed-rate sampling: `k` interval midpoints over the whole video.
pub fn fixed_uniform_pool(video: &PointCloudVideo, k: usize) -> Result<ClipPool> {
    Ok(ClipPool {
        source_id: video.source_id.clone(),
        frame_indices: interval_indices(video.frames.len(), k, IntervalMode::Midpoint)?,
    })
}

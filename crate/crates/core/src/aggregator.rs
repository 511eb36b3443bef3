//! Two-stream multi-level aggregation.
//!
//! Each frame contributes three sub-features: its max-pooled local-region
//! feature (L), its spatial feature (A) and its temporal feature (M). The
//! global stream max-pools them over the whole clip, the partial stream over
//! each temporal segment; the results are row-stacked global first.

use std::ops::Range;

use tmdpt_tensor::Graph;
use tmdpt_tensor::Var;

use crate::config::SplitSpec;
use crate::encoder::FrameFeatures;
use crate::error::{CoreError, Result};

/// Channel offsets of the `[L | A | M]` blocks inside one aggregated row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub local: Range<usize>,
    pub appearance: Range<usize>,
    pub motion: Range<usize>,
}

impl FeatureLayout {
    pub fn new(region_width: usize, m3: usize) -> Self {
        Self {
            local: 0..region_width,
            appearance: region_width..region_width + m3,
            motion: region_width + m3..region_width + 2 * m3,
        }
    }

    pub fn width(&self) -> usize {
        self.motion.end
    }
}

/// Segment frame ranges. Without overlap the segments tile the clip exactly;
/// with overlap `o` consecutive starts are `round(u·(1 − o))` apart and the
/// last segment must end at `q`.
pub fn temporal_split(q: usize, spec: &SplitSpec) -> Result<Vec<Range<usize>>> {
    let (ts, u) = (spec.segments, spec.frames);
    if ts == 0 || u == 0 || u > q {
        return Err(CoreError::Contract(format!("cannot split {q} frames into {ts} segments of {u}")));
    }
    if !(0.0..1.0).contains(&spec.overlap) {
        return Err(CoreError::Contract(format!("overlap {} outside [0, 1)", spec.overlap)));
    }
    let stride = spec.stride();
    let ranges: Vec<Range<usize>> = (0..ts).map(|i| i * stride..i * stride + u).collect();
    if ranges.last().map(|r| r.end) != Some(q) {
        return Err(CoreError::Contract(format!(
            "{ts} segments of {u} frames with overlap {} do not cover {q} frames",
            spec.overlap
        )));
    }
    Ok(ranges)
}

/// Per-frame `[L | A | M]` rows for the global stream and for the partial
/// stream. With `literal_partial` the partial rows repeat A in the M slot.
#[derive(Clone, Copy, Debug)]
pub struct FrameRows {
    pub global: Var,
    pub partial: Var,
}

pub fn frame_rows(g: &mut Graph, features: &FrameFeatures, literal_partial: bool) -> Result<FrameRows> {
    let (local, _) = g.max_reduce(features.regions, 1)?;
    let global = g.concat(&[local, features.spatial, features.temporal], 1)?;
    let partial = if literal_partial {
        g.concat(&[local, features.spatial, features.spatial], 1)?
    } else {
        global
    };
    Ok(FrameRows { global, partial })
}

/// `S_g`: element-wise max of every frame row.
pub fn aggregate_global(g: &mut Graph, rows: &FrameRows) -> Result<Var> {
    Ok(g.max_reduce(rows.global, 0)?.0)
}

/// `S_i`: element-wise max over the frames in `range`.
pub fn aggregate_partial(g: &mut Graph, rows: &FrameRows, range: Range<usize>) -> Result<Var> {
    if range.is_empty() {
        return Err(CoreError::Contract("empty segment".into()));
    }
    let idx: Vec<usize> = range.collect();
    let seg = g.gather_rows(rows.partial, &idx)?;
    Ok(g.max_reduce(seg, 0)?.0)
}

/// Row-stacks `S_g` over the partial features.
pub fn integrate(g: &mut Graph, global: Var, partials: &[Var]) -> Result<Var> {
    let width = g.value(global).numel();
    let mut rows = Vec::with_capacity(partials.len() + 1);
    for &v in std::iter::once(&global).chain(partials) {
        if g.value(v).numel() != width {
            return Err(CoreError::Contract(format!(
                "feature rows differ in width: {} vs {width}",
                g.value(v).numel()
            )));
        }
        rows.push(g.reshape(v, &[1, width])?);
    }
    Ok(g.concat(&rows, 0)?)
}

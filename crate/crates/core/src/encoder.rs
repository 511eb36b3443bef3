//! Per-frame feature learning: two set-abstraction levels, the frame spatial
//! feature, sinusoidal temporal position codes and the frame temporal
//! feature.
//!
//! All frames of a clip are encoded in one batched pass; every weight is
//! shared across frames, regions and group members, and each row of the
//! batched computation only ever reads its own frame's data.

use rand::Rng;
use tmdpt_tensor::{Bound, Graph, ParamStore, Tensor, Var};

use crate::config::EncoderConfig;
use crate::error::{CoreError, Result};
use crate::geometry::LevelGeometry;
use crate::nn::{Linear, Mlp};
use crate::pointcloud::Point3;

/// Sampling and grouping for both abstraction levels of one frame. Level 2
/// samples and groups the level-1 centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGeometry {
    pub level1: LevelGeometry,
    pub level2: LevelGeometry,
}

impl FrameGeometry {
    pub fn build(points: &[Point3], cfg: &EncoderConfig) -> Result<Self> {
        let level1 = LevelGeometry::build(points, cfg.sa1_centroids, cfg.sa1_radius, cfg.sa1_group_size)?;
        let level2 = LevelGeometry::build(&level1.centroids, cfg.sa2_centroids, cfg.sa2_radius, cfg.sa2_group_size)?;
        Ok(Self { level1, level2 })
    }
}

/// `TP[2j] = sin(t / 10000^(2j/m3))`, `TP[2j+1] = cos(...)`.
pub fn temporal_position_encoding(t: usize, m3: usize) -> Result<Vec<f64>> {
    if m3 == 0 || m3 % 2 != 0 {
        return Err(CoreError::Contract(format!("position code width must be even, got {m3}")));
    }
    let mut tp = vec![0.0; m3];
    for j in 0..m3 / 2 {
        let angle = t as f64 / 10000f64.powf((2 * j) as f64 / m3 as f64);
        tp[2 * j] = angle.sin();
        tp[2 * j + 1] = angle.cos();
    }
    Ok(tp)
}

/// Channel gating over the members of each group: max- and mean-pooled
/// descriptors pass through a shared two-layer MLP, and the sigmoid of their
/// sum scales every channel.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl ChannelAttention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, reduction: usize, rng: &mut impl Rng) -> Self {
        let hidden = (width / reduction).max(1);
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), width, hidden, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, width, true, rng),
        }
    }

    /// `features: groups × members × channels`. Returns the gated features
    /// and the `groups × channels` gate.
    pub fn forward(&self, g: &mut Graph, p: &Bound, features: Var) -> Result<(Var, Var)> {
        let groups = g.shape(features)[0];
        let (max_pool, _) = g.max_reduce(features, 1)?;
        let mean_pool = g.mean_reduce(features, 1)?;
        let both = g.concat(&[max_pool, mean_pool], 0)?;
        let h = self.fc1.forward(g, p, both)?;
        let h = g.relu(h)?;
        let z = self.fc2.forward(g, p, h)?;
        let first: Vec<usize> = (0..groups).collect();
        let second: Vec<usize> = (groups..2 * groups).collect();
        let za = g.gather_rows(z, &first)?;
        let zb = g.gather_rows(z, &second)?;
        let logits = g.add(za, zb)?;
        let gate = g.sigmoid(logits)?;
        let out = g.scale_groups(features, gate)?;
        Ok((out, gate))
    }
}

/// Graph handles for the encoded frames of one clip.
#[derive(Clone, Copy, Debug)]
pub struct FrameFeatures {
    /// `frames × n2 × (d2 + 3)` local-region features.
    pub regions: Var,
    /// `frames × m3` frame spatial features.
    pub spatial: Var,
    /// `frames × m3` frame temporal features.
    pub temporal: Var,
    pub frames: usize,
}

/// Plain values for one frame of an encoded clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatureBundle {
    pub t: usize,
    /// `n2 × (d2 + 3)`, row-major.
    pub regions: Tensor,
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

impl FrameFeatures {
    pub fn bundles(&self, g: &Graph) -> Vec<FrameFeatureBundle> {
        let r = g.value(self.regions);
        let (n2, w) = (r.shape()[1], r.shape()[2]);
        let s = g.value(self.spatial);
        let tf = g.value(self.temporal);
        let m3 = s.shape()[1];
        (0..self.frames)
            .map(|t| FrameFeatureBundle {
                t,
                regions: Tensor::new(vec![n2, w], r.data()[t * n2 * w..(t + 1) * n2 * w].to_vec()).unwrap(),
                spatial: s.data()[t * m3..(t + 1) * m3].to_vec(),
                temporal: tf.data()[t * m3..(t + 1) * m3].to_vec(),
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FrameEncoder {
    pub cfg: EncoderConfig,
    pub sa1: Mlp,
    pub sa2: Mlp,
    pub attention: Option<ChannelAttention>,
    pub frame_mlp: Mlp,
    pub temporal: Linear,
}

fn stack_constant(g: &mut Graph, parts: impl Iterator<Item = Vec<f64>>, cols: usize) -> Result<Var> {
    let data: Vec<f64> = parts.flatten().collect();
    let rows = data.len() / cols;
    Ok(g.constant(Tensor::matrix(rows, cols, data)?))
}

impl FrameEncoder {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let sa1 = Mlp::new(store, "sa1.mlp", 4, &cfg.sa1_mlp, rng);
        let sa2 = Mlp::new(store, "sa2.mlp", 4 + cfg.d1(), &cfg.sa2_mlp, rng);
        let attention = cfg
            .channel_attention
            .then(|| ChannelAttention::new(store, "sa2.ca", cfg.d2(), cfg.channel_attention_reduction, rng));
        let frame_mlp = Mlp::new(store, "frame.mlp", cfg.region_width(), &cfg.frame_mlp, rng);
        let temporal = Linear::new(store, "temporal", cfg.m3(), cfg.m3(), true, rng);
        Self {
            cfg: cfg.clone(),
            sa1,
            sa2,
            attention,
            frame_mlp,
            temporal,
        }
    }

    /// One set-abstraction level over a batch of frames: group, shared MLP,
    /// optional channel attention, max over group members.
    ///
    /// `inputs` carries the previous level's per-point features as
    /// `(frames · rows_per_frame) × f`; the grouped tensor is
    /// `[local xyz, distance, features]`. Returns `(frames · groups) × d`.
    pub fn set_abstraction(
        &self,
        g: &mut Graph,
        p: &Bound,
        levels: &[&LevelGeometry],
        inputs: Option<(Var, usize)>,
        mlp: &Mlp,
        attention: Option<&ChannelAttention>,
    ) -> Result<Var> {
        let groups = levels[0].groups.num_groups();
        let k = levels[0].groups.group_size;
        let local = stack_constant(g, levels.iter().map(|l| l.local.clone()), 4)?;
        let x = match inputs {
            None => local,
            Some((features, rows_per_frame)) => {
                let idx: Vec<usize> = levels
                    .iter()
                    .enumerate()
                    .flat_map(|(f, l)| l.groups.group_indices.iter().map(move |&i| f * rows_per_frame + i))
                    .collect();
                let gathered = g.gather_rows(features, &idx)?;
                g.concat(&[local, gathered], 1)?
            }
        };
        let h = mlp.forward(g, p, x)?;
        let d = mlp.out_dim();
        let mut h = g.reshape(h, &[levels.len() * groups, k, d])?;
        if let Some(ca) = attention {
            h = ca.forward(g, p, h)?.0;
        }
        Ok(g.max_reduce(h, 1)?.0)
    }

    /// Frame spatial feature: shared MLP over region rows, then max over
    /// regions. `regions: frames × n2 × w` → `frames × m3`.
    pub fn frame_spatial_feature(&self, g: &mut Graph, p: &Bound, regions: Var) -> Result<Var> {
        let s = g.shape(regions).to_vec();
        let flat = g.reshape(regions, &[s[0] * s[1], s[2]])?;
        let h = self.frame_mlp.forward(g, p, flat)?;
        let h = g.reshape(h, &[s[0], s[1], self.cfg.m3()])?;
        Ok(g.max_reduce(h, 1)?.0)
    }

    /// `MLP(FS_t + TP_t)` for frames at clip positions `0..frames`.
    pub fn frame_temporal_feature(&self, g: &mut Graph, p: &Bound, spatial: Var) -> Result<Var> {
        let frames = g.shape(spatial)[0];
        let m3 = self.cfg.m3();
        let mut tp = Vec::with_capacity(frames * m3);
        for t in 0..frames {
            tp.extend(temporal_position_encoding(t, m3)?);
        }
        let tp = g.constant(Tensor::matrix(frames, m3, tp)?);
        let x = g.add(spatial, tp)?;
        let y = self.temporal.forward(g, p, x)?;
        Ok(g.relu(y)?)
    }

    /// Encodes the frames of a clip in order; position `t` is the index in
    /// `frames`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, frames: &[&FrameGeometry]) -> Result<FrameFeatures> {
        if frames.is_empty() {
            return Err(CoreError::Contract("clip has no frames".into()));
        }
        let q = frames.len();
        let cfg = &self.cfg;
        let level1: Vec<&LevelGeometry> = frames.iter().map(|f| &f.level1).collect();
        let level2: Vec<&LevelGeometry> = frames.iter().map(|f| &f.level2).collect();
        let f1 = self.set_abstraction(g, p, &level1, None, &self.sa1, None)?;
        let f2 = self.set_abstraction(g, p, &level2, Some((f1, cfg.sa1_centroids)), &self.sa2, self.attention.as_ref())?;
        let centroids = stack_constant(g, level2.iter().map(|l| l.centroids.concat()), 3)?;
        let regions = g.concat(&[f2, centroids], 1)?;
        let regions = g.reshape(regions, &[q, cfg.sa2_centroids, cfg.region_width()])?;
        let spatial = self.frame_spatial_feature(g, p, regions)?;
        let temporal = self.frame_temporal_feature(g, p, spatial)?;
        Ok(FrameFeatures {
            regions,
            spatial,
            temporal,
            frames: q,
        })
    }
}

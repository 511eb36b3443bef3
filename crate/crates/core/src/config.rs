//! Run configuration.
//!
//! One flat JSON object; every key is optional and unknown keys are
//! rejected. Module configs ([`EncoderConfig`], [`SplitSpec`],
//! [`TransformerConfig`]) are derived views checked by [`RunConfig::validate`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CoreError, Result};
use crate::ifs::SamplingMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformerInput {
    MultiLevel,
    MotionOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputAggregation {
    Mlp,
    Maxpool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // data
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub num_classes: usize,
    pub raw_points_per_frame: usize,
    pub points_per_frame: usize,
    pub voxel_size: f64,

    // frame sampling
    pub top_frame_rate: usize,
    pub bottom_frame_rate: usize,
    pub sampling_mode: SamplingMode,

    // frame encoder
    pub sa1_centroids: usize,
    pub sa2_centroids: usize,
    pub sa1_radius: f64,
    pub sa2_radius: f64,
    pub sa1_group_size: usize,
    pub sa2_group_size: usize,
    pub sa1_mlp: Vec<usize>,
    pub sa2_mlp: Vec<usize>,
    pub frame_mlp: Vec<usize>,
    pub channel_attention: bool,
    pub channel_attention_reduction: usize,

    // aggregation
    pub two_stream: bool,
    pub temporal_segments: usize,
    pub segment_frames: usize,
    pub segment_overlap: f64,
    pub eq6_literal: bool,

    // transformer
    pub transformer_enabled: bool,
    pub transformer_blocks: usize,
    pub transformer_heads: usize,
    pub d_model: usize,
    pub ffn_width: Option<usize>,
    pub transformer_input: TransformerInput,
    pub transformer_output_agg: OutputAggregation,
    pub layer_norm_eps: f64,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    pub dataset_seed: u64,
    pub augmentation: bool,
    pub eval_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_data: None,
            eval_data: None,
            output_dir: None,
            num_classes: 6,
            raw_points_per_frame: 2048,
            points_per_frame: 512,
            voxel_size: 0.05,
            top_frame_rate: 50,
            bottom_frame_rate: 24,
            sampling_mode: SamplingMode::Ifs,
            sa1_centroids: 128,
            sa2_centroids: 32,
            sa1_radius: 0.06,
            sa2_radius: 0.1,
            sa1_group_size: 32,
            sa2_group_size: 32,
            sa1_mlp: vec![32, 64],
            sa2_mlp: vec![64, 128],
            frame_mlp: vec![256],
            channel_attention: true,
            channel_attention_reduction: 4,
            two_stream: true,
            temporal_segments: 6,
            segment_frames: 4,
            segment_overlap: 0.0,
            eq6_literal: false,
            transformer_enabled: true,
            transformer_blocks: 5,
            transformer_heads: 18,
            d_model: 288,
            ffn_width: None,
            transformer_input: TransformerInput::MultiLevel,
            transformer_output_agg: OutputAggregation::Mlp,
            layer_norm_eps: 1e-5,
            epochs: 90,
            batch_size: 32,
            lr: 0.001,
            lr_decay: 0.5,
            lr_decay_every: 10,
            seed: 0,
            dataset_seed: 0,
            augmentation: false,
            eval_every: 1,
        }
    }
}

/// Widths and sampling sizes of the per-frame encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub points_per_frame: usize,
    pub sa1_centroids: usize,
    pub sa2_centroids: usize,
    pub sa1_radius: f64,
    pub sa2_radius: f64,
    pub sa1_group_size: usize,
    pub sa2_group_size: usize,
    pub sa1_mlp: Vec<usize>,
    pub sa2_mlp: Vec<usize>,
    pub frame_mlp: Vec<usize>,
    pub channel_attention: bool,
    pub channel_attention_reduction: usize,
}

impl EncoderConfig {
    pub fn d1(&self) -> usize {
        *self.sa1_mlp.last().unwrap()
    }

    pub fn d2(&self) -> usize {
        *self.sa2_mlp.last().unwrap()
    }

    pub fn m3(&self) -> usize {
        *self.frame_mlp.last().unwrap()
    }

    /// Width of a local-region feature: level-2 feature plus centroid xyz.
    pub fn region_width(&self) -> usize {
        self.d2() + 3
    }
}

/// Temporal split of a clip into segments of `frames` with the given overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub segments: usize,
    pub frames: usize,
    pub overlap: f64,
}

impl SplitSpec {
    /// Frames between consecutive segment starts.
    pub fn stride(&self) -> usize {
        ((self.frames as f64) * (1.0 - self.overlap)).round().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerConfig {
    pub enabled: bool,
    pub blocks: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn_width: usize,
    pub num_classes: usize,
    pub input: TransformerInput,
    pub output_agg: OutputAggregation,
    pub layer_norm_eps: f64,
}

impl TransformerConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Config(msg.into()))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    /// Frames per clip after sampling.
    pub fn clip_len(&self) -> usize {
        match self.sampling_mode {
            SamplingMode::Ifs => self.bottom_frame_rate,
            SamplingMode::FixedUniform(k) => k,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            points_per_frame: self.points_per_frame,
            sa1_centroids: self.sa1_centroids,
            sa2_centroids: self.sa2_centroids,
            sa1_radius: self.sa1_radius,
            sa2_radius: self.sa2_radius,
            sa1_group_size: self.sa1_group_size,
            sa2_group_size: self.sa2_group_size,
            sa1_mlp: self.sa1_mlp.clone(),
            sa2_mlp: self.sa2_mlp.clone(),
            frame_mlp: self.frame_mlp.clone(),
            channel_attention: self.channel_attention,
            channel_attention_reduction: self.channel_attention_reduction,
        }
    }

    /// `None` when the partial stream is off.
    pub fn split(&self) -> Option<SplitSpec> {
        self.two_stream.then(|| SplitSpec {
            segments: self.temporal_segments,
            frames: self.segment_frames,
            overlap: self.segment_overlap,
        })
    }

    pub fn transformer(&self) -> TransformerConfig {
        TransformerConfig {
            enabled: self.transformer_enabled,
            blocks: self.transformer_blocks,
            heads: self.transformer_heads,
            d_model: self.d_model,
            ffn_width: self.ffn_width.unwrap_or(4 * self.d_model),
            num_classes: self.num_classes,
            input: self.transformer_input,
            output_agg: self.transformer_output_agg,
            layer_norm_eps: self.layer_norm_eps,
        }
    }

    /// Learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("raw_points_per_frame", self.raw_points_per_frame),
            ("points_per_frame", self.points_per_frame),
            ("top_frame_rate", self.top_frame_rate),
            ("bottom_frame_rate", self.bottom_frame_rate),
            ("sa1_centroids", self.sa1_centroids),
            ("sa2_centroids", self.sa2_centroids),
            ("sa1_group_size", self.sa1_group_size),
            ("sa2_group_size", self.sa2_group_size),
            ("channel_attention_reduction", self.channel_attention_reduction),
            ("d_model", self.d_model),
            ("transformer_heads", self.transformer_heads),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("lr_decay_every", self.lr_decay_every),
            ("eval_every", self.eval_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return config_err(format!("{name} must be >= 1"));
            }
        }
        if self.points_per_frame > self.raw_points_per_frame {
            return config_err("points_per_frame exceeds raw_points_per_frame");
        }
        if self.sa1_centroids > self.points_per_frame || self.sa2_centroids > self.sa1_centroids {
            return config_err("centroid counts must satisfy sa2 <= sa1 <= points_per_frame");
        }
        if !(self.sa1_radius > 0.0 && self.sa2_radius > 0.0) {
            return config_err("ball radii must be > 0");
        }
        if !(self.voxel_size > 0.0) {
            return config_err("voxel_size must be > 0");
        }
        for (name, widths) in [("sa1_mlp", &self.sa1_mlp), ("sa2_mlp", &self.sa2_mlp), ("frame_mlp", &self.frame_mlp)] {
            if widths.is_empty() || widths.contains(&0) {
                return config_err(format!("{name} needs at least one positive width"));
            }
        }
        if self.encoder().m3() % 2 != 0 {
            return config_err("frame feature width (last frame_mlp entry) must be even");
        }
        match self.sampling_mode {
            SamplingMode::Ifs => {
                if self.bottom_frame_rate > self.top_frame_rate {
                    return config_err("bottom_frame_rate exceeds top_frame_rate");
                }
            }
            SamplingMode::FixedUniform(0) => return config_err("fixed_uniform needs >= 1 frame"),
            SamplingMode::FixedUniform(_) => {}
        }
        if let Some(split) = self.split() {
            crate::aggregator::temporal_split(self.clip_len(), &split).map_err(|e| CoreError::Config(e.to_string()))?;
        }
        if self.d_model % self.transformer_heads != 0 {
            return config_err(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.transformer_heads
            ));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return config_err("lr must be > 0 and lr_decay in (0, 1]");
        }
        if !(self.layer_norm_eps > 0.0) {
            return config_err("layer_norm_eps must be > 0");
        }
        Ok(())
    }
}

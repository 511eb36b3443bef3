//! Datasets on disk and their preprocessed in-memory form.
//!
//! A dataset directory holds `.pcv` files and a `manifest.jsonl` with one
//! `{"file", "label", "class_name"}` object per line. Preparation normalizes
//! each video, fixes its frame pool and downsamples every pooled frame, so
//! epochs only re-run Step II and the per-clip grouping.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::encoder::FrameGeometry;
use crate::error::{io_err, CoreError, Result};
use crate::geometry::farthest_point_sampling;
use crate::ifs::{self, ClipPool, SamplingMode};
use crate::pointcloud::{normalize_video, random_downsample, read_pcv, Point3, PointCloudFrame, PointCloudVideo};
use crate::seed::{self, Stage};

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: u32,
    pub class_name: String,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CoreError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Loads every video listed in the manifest, in manifest order; the manifest
/// label overrides the one stored in the file.
pub fn load_dataset(dir: &Path) -> Result<Vec<PointCloudVideo>> {
    let entries = read_manifest(dir)?;
    if entries.is_empty() {
        return Err(CoreError::Data(format!("{} lists no samples", dir.join(MANIFEST).display())));
    }
    entries
        .iter()
        .map(|e| {
            let mut v = read_pcv(&dir.join(&e.file))?;
            v.label = Some(e.label);
            Ok(v)
        })
        .collect()
}

/// One pooled frame after downsampling. Grouping is rebuilt per clip: it is
/// cheap next to the network and caching it costs far more memory than the
/// points.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedFrame {
    pub points: Vec<Point3>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub source_id: String,
    pub label: Option<usize>,
    pub pool: ClipPool,
    /// One entry per pool position.
    pub frames: Vec<PreparedFrame>,
}

/// Random downsample to `raw_points_per_frame`, then farthest point sampling
/// down to `points_per_frame`.
pub fn downsample_frame(frame: &PointCloudFrame, cfg: &RunConfig, seed: u64) -> Result<Vec<Point3>> {
    let raw = random_downsample(frame, cfg.raw_points_per_frame, seed)?;
    let picks = farthest_point_sampling(&raw.points, cfg.points_per_frame)?;
    Ok(picks.into_iter().map(|i| raw.points[i]).collect())
}

pub fn prepare_video(video: &PointCloudVideo, cfg: &RunConfig) -> Result<PreparedSample> {
    let video = normalize_video(video)?;
    let pool = match cfg.sampling_mode {
        SamplingMode::Ifs => ifs::ifs_step1(&video, cfg.top_frame_rate, cfg.dataset_seed)?,
        SamplingMode::FixedUniform(k) => ifs::fixed_uniform_pool(&video, k)?,
    };
    let frames = pool
        .frame_indices
        .iter()
        .map(|&fi| {
            let s = seed::derive(cfg.dataset_seed, Stage::Downsample, &video.source_id, fi as u64);
            Ok(PreparedFrame {
                points: downsample_frame(&video.frames[fi], cfg, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(l) = video.label {
        if l as usize >= cfg.num_classes {
            return Err(CoreError::Data(format!(
                "{}: label {l} outside {} classes",
                video.source_id, cfg.num_classes
            )));
        }
    }
    Ok(PreparedSample {
        source_id: video.source_id.clone(),
        label: video.label.map(|l| l as usize),
        pool,
        frames,
    })
}

/// Prepares videos in parallel; output order follows input order.
pub fn prepare_all(videos: &[PointCloudVideo], cfg: &RunConfig) -> Result<Vec<PreparedSample>> {
    videos.par_iter().map(|v| prepare_video(v, cfg)).collect()
}

pub fn load_prepared(dir: &Path, cfg: &RunConfig) -> Result<Vec<PreparedSample>> {
    prepare_all(&load_dataset(dir)?, cfg)
}

/// Grouped frames of one pass through a sample, in clip order.
pub struct ClipFrames(pub Vec<FrameGeometry>);

impl ClipFrames {
    pub fn as_refs(&self) -> Vec<&FrameGeometry> {
        self.0.iter().collect()
    }
}

/// Pool positions used for one pass (Step II, or every position under
/// fixed-rate sampling).
pub fn clip_positions(sample: &PreparedSample, cfg: &RunConfig, epoch: usize, eval: bool) -> Result<Vec<usize>> {
    match cfg.sampling_mode {
        SamplingMode::Ifs => ifs::ifs_step2(&sample.pool, cfg.bottom_frame_rate, epoch as u64, cfg.seed, eval),
        SamplingMode::FixedUniform(_) => Ok((0..sample.pool.len()).collect()),
    }
}

/// Rotation about the vertical (y) axis, uniform in ±10°, plus N(0, 0.01²)
/// jitter on every coordinate; one rotation per clip.
pub fn augment_clip(frames: &[&PreparedFrame], rng: &mut impl Rng) -> Vec<Vec<Point3>> {
    let angle = rng.gen_range(-10.0f64..10.0).to_radians();
    let (s, c) = angle.sin_cos();
    let jitter = Normal::new(0.0, 0.01).expect("valid sigma");
    frames
        .iter()
        .map(|f| {
            f.points
                .iter()
                .map(|p| {
                    let r = [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]];
                    r.map(|v| v + jitter.sample(rng))
                })
                .collect()
        })
        .collect()
}

pub fn clip_frames(sample: &PreparedSample, cfg: &RunConfig, epoch: usize, eval: bool) -> Result<ClipFrames> {
    let positions = clip_positions(sample, cfg, epoch, eval)?;
    let chosen: Vec<&PreparedFrame> = positions.iter().map(|&i| &sample.frames[i]).collect();
    let enc = cfg.encoder();
    let build = |pts: &[Point3]| FrameGeometry::build(pts, &enc);
    let frames = if eval || !cfg.augmentation {
        chosen.iter().map(|f| build(&f.points)).collect::<Result<Vec<_>>>()?
    } else {
        let mut rng = seed::rng(cfg.seed, Stage::Augment, &sample.source_id, epoch as u64);
        augment_clip(&chosen, &mut rng).iter().map(|p| build(p)).collect::<Result<Vec<_>>>()?
    };
    Ok(ClipFrames(frames))
}

pub fn resolve(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| CoreError::Config(format!("{key} is required")))
}

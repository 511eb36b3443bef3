#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmdpt_core::config::RunConfig;
use tmdpt_core::encoder::FrameGeometry;
use tmdpt_core::pointcloud::Point3;
use tmdpt_tensor::{Graph, Tensor, Var};

/// Small enough for finite differences and per-test training.
pub fn tiny_config() -> RunConfig {
    RunConfig {
        raw_points_per_frame: 96,
        points_per_frame: 64,
        sa1_centroids: 16,
        sa2_centroids: 8,
        sa1_radius: 0.3,
        sa2_radius: 0.5,
        sa1_group_size: 8,
        sa2_group_size: 8,
        sa1_mlp: vec![8],
        sa2_mlp: vec![16],
        frame_mlp: vec![16],
        top_frame_rate: 12,
        bottom_frame_rate: 8,
        temporal_segments: 2,
        segment_frames: 4,
        d_model: 8,
        transformer_heads: 2,
        transformer_blocks: 1,
        batch_size: 4,
        ..RunConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect()
}

pub fn random_frames(rng: &mut ChaCha8Rng, cfg: &RunConfig, q: usize) -> Vec<FrameGeometry> {
    let enc = cfg.encoder();
    (0..q)
        .map(|_| FrameGeometry::build(&random_points(rng, cfg.points_per_frame), &enc).unwrap())
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn values(g: &Graph, v: Var) -> Vec<f64> {
    g.value(v).data().to_vec()
}

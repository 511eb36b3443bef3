//! Point-cloud frames and videos: depth conversion, voxel occupancy,
//! per-video normalization, downsampling and the on-disk formats.

mod depth;
mod pcv;

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::seed::{self, Stage};

pub use depth::{decode_depth_frame, depth_to_points, encode_depth_frame, DepthFrame, Intrinsics};
pub use pcv::{decode_pcv, encode_pcv, read_pcv, write_pcv, UNLABELED};

pub type Point3 = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudFrame {
    pub points: Vec<Point3>,
}

impl PointCloudFrame {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudVideo {
    pub frames: Vec<PointCloudFrame>,
    pub label: Option<u32>,
    pub source_id: String,
}

/// One point per occupied voxel, placed at the voxel center, in
/// lexicographic order of the integer voxel index.
pub fn voxel_occupancy(frame: &PointCloudFrame, voxel_size: f64) -> Result<PointCloudFrame> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(CoreError::Contract(format!("voxel size must be > 0, got {voxel_size}")));
    }
    let cells: BTreeSet<[i64; 3]> = frame
        .points
        .iter()
        .map(|p| p.map(|c| (c / voxel_size).floor() as i64))
        .collect();
    let points = cells
        .into_iter()
        .map(|cell| cell.map(|i| (i as f64 + 0.5) * voxel_size))
        .collect();
    Ok(PointCloudFrame { points })
}

/// Bounding-box center and half of the largest axis extent over all frames.
pub fn video_bounds(video: &PointCloudVideo) -> Result<(Point3, f64)> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in video.frames.iter().flat_map(|f| &f.points) {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if lo[0] > hi[0] {
        return Err(CoreError::DegenerateGeometry("video has no points".into()));
    }
    let center = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]));
    let half = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max) / 2.0;
    if !(half > 0.0) || !half.is_finite() {
        return Err(CoreError::DegenerateGeometry("all points coincide".into()));
    }
    Ok((center, half))
}

/// A single affine map per video: subtract the bounding-box center of all
/// points of all frames and divide by half the largest extent. Inter-frame
/// motion is kept, and every coordinate ends up in [-1, 1].
pub fn normalize_video(video: &PointCloudVideo) -> Result<PointCloudVideo> {
    if video.frames.is_empty() {
        return Err(CoreError::Contract("video has no frames".into()));
    }
    let (center, half) = video_bounds(video)?;
    let frames = video
        .frames
        .iter()
        .map(|f| PointCloudFrame {
            points: f
                .points
                .iter()
                .map(|p| [0, 1, 2].map(|a| (p[a] - center[a]) / half))
                .collect(),
        })
        .collect();
    Ok(PointCloudVideo {
        frames,
        label: video.label,
        source_id: video.source_id.clone(),
    })
}

/// Exactly `n` points. With enough input points they are drawn without
/// replacement; otherwise every input point is kept once and the remainder
/// is filled with uniformly drawn repeats.
pub fn random_downsample(frame: &PointCloudFrame, n: usize, seed: u64) -> Result<PointCloudFrame> {
    if n == 0 {
        return Err(CoreError::Contract("downsample target must be >= 1".into()));
    }
    if frame.is_empty() {
        return Err(CoreError::EmptyFrame);
    }
    let mut rng = seed::rng(seed, Stage::Downsample, "", 0);
    let count = frame.len();
    let points = if count >= n {
        index::sample(&mut rng, count, n)
            .into_iter()
            .map(|i| frame.points[i])
            .collect()
    } else {
        let mut pts = frame.points.clone();
        pts.extend((count..n).map(|_| frame.points[rng.gen_range(0..count)]));
        pts
    };
    Ok(PointCloudFrame { points })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn voxel_merges_points_in_one_cell() {
        let f = PointCloudFrame::new(vec![[0.01, 0.01, 0.01], [0.02, 0.03, 0.04]]);
        let out = voxel_occupancy(&f, 0.05).unwrap();
        assert_eq!(out.points, vec![[0.025, 0.025, 0.025]]);
        assert!(voxel_occupancy(&f, 0.0).is_err());
    }

    #[test]
    fn voxel_keeps_separated_centers() {
        let pts: Vec<Point3> = (0..5).map(|i| [(i as f64 + 0.5) * 0.1, 0.05, 0.05]).collect();
        let out = voxel_occupancy(&PointCloudFrame::new(pts.clone()), 0.1).unwrap();
        assert_eq!(out.len(), 5);
        for (a, b) in out.points.iter().zip(&pts) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn voxel_matches_hash_of_floor_oracle() {
        let pts = random_points(1000, 3);
        let out = voxel_occupancy(&PointCloudFrame::new(pts.clone()), 0.05).unwrap();
        let oracle: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| {
                let f = |c: f64| (c / 0.05).floor() as i64;
                (f(p[0]), f(p[1]), f(p[2]))
            })
            .collect();
        assert_eq!(out.len(), oracle.len());
        for c in &out.points {
            let cell = |v: f64| ((v / 0.05) - 0.5).round() as i64;
            assert!(oracle.contains(&(cell(c[0]), cell(c[1]), cell(c[2]))));
        }
        let mut sorted = out.points.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, out.points);
    }

    #[test]
    fn normalize_scales_cube_and_is_idempotent() {
        let corners: Vec<Point3> = (0..8)
            .map(|i| [0, 1, 2].map(|a| if (i >> a) & 1 == 1 { 2.0 } else { -2.0 }))
            .collect();
        let v = PointCloudVideo {
            frames: vec![PointCloudFrame::new(corners.clone())],
            label: None,
            source_id: "cube".into(),
        };
        let n = normalize_video(&v).unwrap();
        for (a, b) in n.frames[0].points.iter().zip(&corners) {
            for k in 0..3 {
                assert_eq!(a[k], b[k] / 2.0);
            }
        }
        let again = normalize_video(&n).unwrap();
        for (a, b) in again.frames[0].points.iter().zip(&n.frames[0].points) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_preserves_motion() {
        let base = random_points(50, 5);
        let t = [0.3, -0.2, 0.1];
        let moved: Vec<Point3> = base.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let v = PointCloudVideo {
            frames: vec![PointCloudFrame::new(base), PointCloudFrame::new(moved)],
            label: Some(1),
            source_id: "m".into(),
        };
        let (_, scale) = video_bounds(&v).unwrap();
        let n = normalize_video(&v).unwrap();
        for (a, b) in n.frames[0].points.iter().zip(&n.frames[1].points) {
            for k in 0..3 {
                assert!((b[k] - a[k] - t[k] / scale).abs() < 1e-12);
            }
        }
        assert!(n.frames.iter().flat_map(|f| &f.points).all(|p| p.iter().all(|c| c.abs() <= 1.0)));
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let v = PointCloudVideo {
            frames: vec![PointCloudFrame::new(vec![[1.0, 2.0, 3.0]; 4])],
            label: None,
            source_id: "d".into(),
        };
        assert!(matches!(normalize_video(&v), Err(CoreError::DegenerateGeometry(_))));
    }

    #[test]
    fn downsample_cases() {
        let pts = random_points(5000, 7);
        let f = PointCloudFrame::new(pts.clone());
        let a = random_downsample(&f, 2048, 11).unwrap();
        assert_eq!(a.len(), 2048);
        let distinct: HashSet<[u64; 3]> = a.points.iter().map(|p| p.map(f64::to_bits)).collect();
        assert_eq!(distinct.len(), 2048);
        assert_eq!(a, random_downsample(&f, 2048, 11).unwrap());

        let small = PointCloudFrame::new(pts[..10].to_vec());
        let perm = random_downsample(&small, 10, 1).unwrap();
        let mut x: Vec<[u64; 3]> = perm.points.iter().map(|p| p.map(f64::to_bits)).collect();
        let mut y: Vec<[u64; 3]> = small.points.iter().map(|p| p.map(f64::to_bits)).collect();
        x.sort();
        y.sort();
        assert_eq!(x, y);

        let up = random_downsample(&small, 25, 1).unwrap();
        assert_eq!(up.len(), 25);
        assert!(up.points.iter().all(|p| small.points.contains(p)));
        assert!(random_downsample(&small, 0, 1).is_err());
    }
}

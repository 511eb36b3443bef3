//! Sampling and grouping kernels for set abstraction.
//!
//! Distances are brute force O(n·k); frames hold at most a few thousand
//! points so no spatial index is needed.

use tmdpt_tensor::Tensor;

use crate::error::{CoreError, Result};
use crate::pointcloud::Point3;

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Greedy k-center selection seeded at index 0. Each pick maximizes the
/// minimum distance to the points already picked; ties go to the lowest
/// index.
pub fn farthest_point_sampling(points: &[Point3], k: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(CoreError::Contract(format!("cannot pick {k} of {n} points")));
    }
    let mut picked = Vec::with_capacity(k);
    // picked points are parked at -1 so zero-distance duplicates stay eligible
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = 0;
    for _ in 0..k {
        picked.push(current);
        min_d[current] = -1.0;
        let c = points[current];
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, (p, md)) in points.iter().zip(min_d.iter_mut()).enumerate() {
            if *md >= 0.0 {
                let d = dist2(p, &c);
                if d < *md {
                    *md = d;
                }
            }
            if *md > best_d {
                best_d = *md;
                best = i;
            }
        }
        current = best;
    }
    Ok(picked)
}

/// Fixed-size neighborhoods around sampled centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSpec {
    pub centroid_indices: Vec<usize>,
    /// `centroids × group_size` point indices, row-major.
    pub group_indices: Vec<usize>,
    pub radius: f64,
    pub group_size: usize,
}

impl GroupSpec {
    pub fn num_groups(&self) -> usize {
        self.centroid_indices.len()
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.group_indices[g * self.group_size..(g + 1) * self.group_size]
    }
}

/// Up to `group_size` points within `radius` of each centroid: the centroid
/// first, then other in-ball points in ascending index order. Short groups
/// are padded with the centroid's nearest in-ball neighbor, or with the
/// centroid itself when it is alone.
pub fn ball_query(points: &[Point3], centroids: &[usize], radius: f64, group_size: usize) -> Result<GroupSpec> {
    if !(radius > 0.0) {
        return Err(CoreError::Contract(format!("ball radius must be > 0, got {radius}")));
    }
    if group_size == 0 {
        return Err(CoreError::Contract("group size must be >= 1".into()));
    }
    if let Some(&bad) = centroids.iter().find(|&&c| c >= points.len()) {
        return Err(CoreError::Contract(format!("centroid {bad} of {} points", points.len())));
    }
    let mut group_indices = Vec::with_capacity(centroids.len() * group_size);
    for &c in centroids {
        let center = points[c];
        let start = group_indices.len();
        group_indices.push(c);
        let mut nearest: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if group_indices.len() - start == group_size {
                break;
            }
            if i == c {
                continue;
            }
            let d = dist2(p, &center).sqrt();
            if d <= radius {
                group_indices.push(i);
                if nearest.map_or(true, |(nd, _)| d < nd) {
                    nearest = Some((d, i));
                }
            }
        }
        let pad = nearest.map_or(c, |(_, i)| i);
        group_indices.resize(start + group_size, pad);
    }
    Ok(GroupSpec {
        centroid_indices: centroids.to_vec(),
        group_indices,
        radius,
        group_size,
    })
}

/// Per grouped point: `[x − cx, y − cy, z − cz, ‖p − c‖]`, flattened as
/// `groups × group_size × 4`.
pub fn local_channels(points: &[Point3], spec: &GroupSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.group_indices.len() * 4);
    for (g, &c) in spec.centroid_indices.iter().enumerate() {
        let center = points[c];
        for &i in spec.group(g) {
            let p = points[i];
            let local = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            out.extend_from_slice(&local);
            out.push(dist2(&p, &center).sqrt());
        }
    }
    out
}

/// Grouped tensor of shape `groups × group_size × (4 + f)`: local coordinates,
/// centroid distance, then the point's existing features when given.
pub fn group_and_localize(points: &[Point3], features: Option<&Tensor>, spec: &GroupSpec) -> Result<Tensor> {
    let local = local_channels(points, spec);
    let (groups, k) = (spec.num_groups(), spec.group_size);
    let Some(feat) = features else {
        return Ok(Tensor::new(vec![groups, k, 4], local)?);
    };
    let (rows, f) = feat.dims2()?;
    if rows != points.len() {
        return Err(CoreError::Contract(format!("{rows} feature rows for {} points", points.len())));
    }
    let mut data = Vec::with_capacity(groups * k * (4 + f));
    for (slot, &i) in spec.group_indices.iter().enumerate() {
        data.extend_from_slice(&local[slot * 4..slot * 4 + 4]);
        data.extend_from_slice(feat.row(i));
    }
    Ok(Tensor::new(vec![groups, k, 4 + f], data)?)
}

/// Sampling and grouping of one set-abstraction level, precomputed from
/// coordinates alone.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGeometry {
    pub groups: GroupSpec,
    pub centroids: Vec<Point3>,
    /// `groups × group_size × 4` local channels.
    pub local: Vec<f64>,
}

impl LevelGeometry {
    pub fn build(points: &[Point3], num_centroids: usize, radius: f64, group_size: usize) -> Result<Self> {
        let picks = farthest_point_sampling(points, num_centroids)?;
        let groups = ball_query(points, &picks, radius, group_size)?;
        let local = local_channels(points, &groups);
        let centroids = picks.iter().map(|&i| points[i]).collect();
        Ok(Self {
            groups,
            centroids,
            local,
        })
    }
}

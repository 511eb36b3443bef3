//! `.dep` depth rasters.
//!
//! Little-endian: magic `DEPH`, `u32` width, `u32` height, eight `f32`
//! (fx, fy, cx, cy, then four reserved zeros), then width × height `u16`
//! depths in millimeters, row-major. Zero means "no reading".

use super::{Point3, PointCloudFrame};
use crate::error::{CoreError, Result};

const MAGIC: &[u8; 4] = b"DEPH";
const HEADER: usize = 4 + 4 + 4 + 8 * 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub depth_mm: Vec<u16>,
    pub intrinsics: Intrinsics,
}

impl DepthFrame {
    pub fn valid_pixels(&self) -> usize {
        self.depth_mm.iter().filter(|&&d| d != 0).count()
    }
}

pub fn encode_depth_frame(frame: &DepthFrame) -> Result<Vec<u8>> {
    let n = frame.width as usize * frame.height as usize;
    if frame.depth_mm.len() != n {
        return Err(CoreError::Contract(format!(
            "depth array has {} entries for {}x{}",
            frame.depth_mm.len(),
            frame.width,
            frame.height
        )));
    }
    let mut out = Vec::with_capacity(HEADER + 2 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&frame.width.to_le_bytes());
    out.extend_from_slice(&frame.height.to_le_bytes());
    let k = frame.intrinsics;
    for v in [k.fx, k.fy, k.cx, k.cy, 0.0, 0.0, 0.0, 0.0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for d in &frame.depth_mm {
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_depth_frame(bytes: &[u8]) -> Result<DepthFrame> {
    if bytes.len() < HEADER {
        return Err(CoreError::Format(format!("depth header needs {HEADER} bytes, got {}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(CoreError::Format("bad depth magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (width, height) = (u32_at(4), u32_at(8));
    let intrinsics = Intrinsics {
        fx: f32_at(12),
        fy: f32_at(16),
        cx: f32_at(20),
        cy: f32_at(24),
    };
    let n = width as usize * height as usize;
    let body = &bytes[HEADER..];
    if body.len() != 2 * n {
        return Err(CoreError::Format(format!(
            "{width}x{height} depth payload needs {} bytes, got {}",
            2 * n,
            body.len()
        )));
    }
    let depth_mm = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    Ok(DepthFrame {
        width,
        height,
        depth_mm,
        intrinsics,
    })
}

/// Pinhole back-projection of every nonzero pixel, depth converted to meters.
pub fn depth_to_points(frame: &DepthFrame) -> Result<PointCloudFrame> {
    let k = frame.intrinsics;
    let (fx, fy, cx, cy) = (f64::from(k.fx), f64::from(k.fy), f64::from(k.cx), f64::from(k.cy));
    let w = frame.width as usize;
    let mut points: Vec<Point3> = Vec::new();
    for (i, &d) in frame.depth_mm.iter().enumerate() {
        if d == 0 {
            continue;
        }
        let z = f64::from(d) / 1000.0;
        let (u, v) = ((i % w) as f64, (i / w) as f64);
        points.push([(u - cx) * z / fx, (v - cy) * z / fy, z]);
    }
    if points.is_empty() {
        return Err(CoreError::EmptyFrame);
    }
    Ok(PointCloudFrame { points })
}

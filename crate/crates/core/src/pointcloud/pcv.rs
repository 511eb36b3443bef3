//! `.pcv` point-cloud videos.
//!
//! Little-endian: magic `PCV1`, `u32` frame count, `u32` label
//! (`0xFFFFFFFF` when unlabeled), then per frame a `u32` point count followed
//! by that many `f32` xyz triples.

use std::path::Path;

use super::{PointCloudFrame, PointCloudVideo};
use crate::error::{io_err, CoreError, Result};

const MAGIC: &[u8; 4] = b"PCV1";
pub const UNLABELED: u32 = u32::MAX;

pub fn encode_pcv(video: &PointCloudVideo) -> Result<Vec<u8>> {
    if video.frames.is_empty() {
        return Err(CoreError::Contract("cannot write a video with no frames".into()));
    }
    if video.label == Some(UNLABELED) {
        return Err(CoreError::Contract("label collides with the unlabeled sentinel".into()));
    }
    let total: usize = video.frames.iter().map(PointCloudFrame::len).sum();
    let mut out = Vec::with_capacity(12 + 4 * video.frames.len() + 12 * total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(video.frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&video.label.unwrap_or(UNLABELED).to_le_bytes());
    for f in &video.frames {
        if f.is_empty() {
            return Err(CoreError::Contract("cannot write an empty frame".into()));
        }
        out.extend_from_slice(&(f.len() as u32).to_le_bytes());
        for p in &f.points {
            for &c in p {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_pcv(bytes: &[u8], source_id: &str) -> Result<PointCloudVideo> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        if end > bytes.len() {
            return Err(CoreError::Format(format!("pcv truncated at byte {pos}")));
        }
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(CoreError::Format("bad pcv magic".into()));
    }
    let u32_le = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let frame_count = u32_le(take(4)?) as usize;
    let label = u32_le(take(4)?);
    if frame_count == 0 {
        return Err(CoreError::Format("pcv has no frames".into()));
    }
    let mut frames = Vec::with_capacity(frame_count.min(1 << 16));
    for _ in 0..frame_count {
        let n = u32_le(take(4)?) as usize;
        let raw = take(n.checked_mul(12).ok_or_else(|| CoreError::Format("point count overflow".into()))?)?;
        let points = raw
            .chunks_exact(12)
            .map(|c| [0, 1, 2].map(|a| f64::from(f32::from_le_bytes(c[4 * a..4 * a + 4].try_into().unwrap()))))
            .collect();
        frames.push(PointCloudFrame { points });
    }
    if pos != bytes.len() {
        return Err(CoreError::Format(format!("{} trailing bytes after pcv", bytes.len() - pos)));
    }
    Ok(PointCloudVideo {
        frames,
        label: (label != UNLABELED).then_some(label),
        source_id: source_id.to_string(),
    })
}

pub fn write_pcv(path: &Path, video: &PointCloudVideo) -> Result<()> {
    let bytes = encode_pcv(video)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Reads a video; its `source_id` is the file stem.
pub fn read_pcv(path: &Path) -> Result<PointCloudVideo> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    decode_pcv(&bytes, &id)
}

//! Synthetic two-person interaction videos.
//!
//! Each agent is five limb segments (torso, two arms, two legs) with points
//! scattered along them. A class is a program for the agents' relative
//! motion over normalized time `t ∈ [0, 1]`:
//!
//! | id | name        | program                                                        |
//! |----|-------------|----------------------------------------------------------------|
//! | 0  | handshake   | one agent waves above head while approaching; right hands then meet at waist height and pump |
//! | 1  | hug         | approach to ~0.35 m; arms wrap around the partner's back; one agent steps back at the end |
//! | 2  | high_five   | right hands meet above head height; afterwards they briefly touch again at waist height |
//! | 3  | kick        | stand ~1.1 m apart; actor's leg swings out toward the partner  |
//! | 4  | push        | approach to ~0.7 m; actor's hands hit the partner, who is shoved back |
//! | 5  | walk_past   | walk past each other on parallel lines, never touching         |
//!
//! Confusable pairs share their events and differ in when they happen:
//! handshake and high-five both contain a raised hand and a waist-height
//! touch, in opposite order and with contact only in one of them; hug and
//! push both end with one agent displaced, late versus mid-clip.
//!
//! Per sample, body heights, timings, the actor, and a global yaw and
//! offset are randomized.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ManifestEntry, MANIFEST};
use crate::error::{io_err, CoreError, Result};
use crate::pointcloud::{write_pcv, Point3, PointCloudFrame, PointCloudVideo};
use crate::seed::{self, Stage};

pub const CLASS_NAMES: [&str; 6] = ["handshake", "hug", "high_five", "kick", "push", "walk_past"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub frames_per_video: usize,
    pub points_per_limb: usize,
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            samples_per_class: 120,
            frames_per_video: 60,
            points_per_limb: 8,
            noise_sigma: 0.02,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > CLASS_NAMES.len() {
            return Err(CoreError::Config(format!("classes must be in 1..={}", CLASS_NAMES.len())));
        }
        if self.samples_per_class == 0 || self.frames_per_video == 0 || self.points_per_limb == 0 {
            return Err(CoreError::Config("sample, frame and point counts must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(CoreError::Config("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn lerp3(a: Point3, b: Point3, s: f64) -> Point3 {
    [lerp(a[0], b[0], s), lerp(a[1], b[1], s), lerp(a[2], b[2], s)]
}

/// 0 before `start`, 1 after `end`, smooth in between.
fn ramp(t: f64, start: f64, end: f64) -> f64 {
    let s = ((t - start) / (end - start)).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Rises over `[a, b]`, holds, falls over `[c, d]`.
fn window(t: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    ramp(t, a, b) * (1.0 - ramp(t, c, d))
}

/// Limb end points of one agent in world coordinates (y up).
#[derive(Clone, Copy, Debug)]
struct Pose {
    pelvis: Point3,
    neck: Point3,
    hands: [Point3; 2],
    shoulders: [Point3; 2],
    hips: [Point3; 2],
    feet: [Point3; 2],
}

#[derive(Clone, Copy, Debug)]
struct Agent {
    height: f64,
    /// +1 faces +x, −1 faces −x.
    facing: f64,
}

impl Agent {
    /// Rest pose at ground position `(x, z)`; index 0 is the agent's right side.
    fn rest(&self, x: f64, z: f64, stride_phase: f64, stride_amp: f64) -> Pose {
        let h = self.height;
        let side = |i: usize| if i == 0 { -self.facing } else { self.facing };
        let swing = |i: usize| stride_amp * (stride_phase + PI * i as f64).sin();
        let shoulders = [0, 1].map(|i| [x, 0.82 * h, z + side(i) * 0.11 * h]);
        let hips = [0, 1].map(|i| [x, 0.5 * h, z + side(i) * 0.06 * h]);
        Pose {
            pelvis: [x, 0.5 * h, z],
            neck: [x, 0.85 * h, z],
            hands: [0, 1].map(|i| [x - self.facing * swing(i) * 0.5, 0.45 * h, z + side(i) * 0.13 * h]),
            shoulders,
            hips,
            feet: [0, 1].map(|i| [x + self.facing * swing(i), 0.0, z + side(i) * 0.07 * h]),
        }
    }

    fn segments(&self, pose: &Pose) -> [(Point3, Point3); 5] {
        [
            (pose.pelvis, pose.neck),
            (pose.shoulders[0], pose.hands[0]),
            (pose.shoulders[1], pose.hands[1]),
            (pose.hips[0], pose.feet[0]),
            (pose.hips[1], pose.feet[1]),
        ]
    }
}

/// Per-sample randomization shared by every class program.
struct Variation {
    agents: [Agent; 2],
    /// Motion phase start and end in normalized time.
    t0: f64,
    t1: f64,
    yaw: f64,
    offset: [f64; 2],
    actor: usize,
    pump: f64,
}

fn poses(class: usize, t: f64, v: &Variation) -> [Pose; 2] {
    let [a, b] = v.agents;
    let (t0, t1) = (v.t0, v.t1);
    let approach = ramp(t, 0.0, t0);
    let walking = 1.0 - approach;
    let stride = 2.0 * PI * 3.0 * t;
    let standard = |sep: f64, stride_amp: f64| {
        [
            a.rest(-sep / 2.0, 0.0, stride, stride_amp),
            b.rest(sep / 2.0, 0.0, stride + 0.5, stride_amp),
        ]
    };
    match class {
        // handshake
        0 => {
            let sep = lerp(2.0, 0.9, approach);
            let mut p = standard(sep, 0.15 * walking);
            let reach = window(t, t0, t0 + 0.1, t1 + 0.15, t1 + 0.25);
            let pump = 0.05 * (2.0 * PI * v.pump * (t - t0)).sin() * reach;
            let meet = [0.0, 0.55 * a.height + pump, 0.0];
            for i in 0..2 {
                p[i].hands[0] = lerp3(p[i].hands[0], meet, reach);
            }
            let w = v.actor;
            let wave = window(t, 0.02, 0.06, t0 - 0.06, t0 - 0.02);
            let sway = 0.1 * (2.0 * PI * v.pump * t).sin();
            let raised = add(p[w].shoulders[0], [sway, 0.33 * v.agents[w].height, 0.0]);
            p[w].hands[0] = lerp3(p[w].hands[0], raised, wave);
            p
        }
        // hug
        1 => {
            let sep = lerp(2.0, 0.35, approach);
            let step_back = ramp(t, t1 + 0.1, t1 + 0.2);
            let mut xs = [-sep / 2.0, sep / 2.0];
            xs[v.actor] -= v.agents[v.actor].facing * 0.5 * step_back;
            let mut p = [
                a.rest(xs[0], 0.0, stride, 0.15 * walking),
                b.rest(xs[1], 0.0, stride + 0.5, 0.15 * walking),
            ];
            let wrap = window(t, t0, t1 - 0.05, t1, t1 + 0.1);
            let backs = [p[1].pelvis, p[0].pelvis];
            for i in 0..2 {
                let facing = v.agents[i].facing;
                for side in 0..2 {
                    let lateral = if side == 0 { -0.12 } else { 0.12 };
                    let target = [backs[i][0] + facing * 0.15, 0.72 * v.agents[i].height, lateral];
                    p[i].hands[side] = lerp3(p[i].hands[side], target, wrap);
                }
            }
            p
        }
        // high five
        2 => {
            let sep = lerp(2.0, 0.9, approach);
            let mut p = standard(sep, 0.15 * walking);
            let mid = 0.5 * (t0 + t1);
            let raise = window(t, t0, mid, mid + 0.05, t1 + 0.1);
            let meet = [0.0, 1.12 * a.height.max(b.height), 0.0];
            let low = window(t, t1 + 0.1, t1 + 0.15, t1 + 0.2, t1 + 0.25);
            let waist = [0.0, 0.55 * a.height, 0.0];
            for i in 0..2 {
                p[i].hands[0] = lerp3(p[i].hands[0], meet, raise);
                p[i].hands[0] = lerp3(p[i].hands[0], waist, low);
            }
            p
        }
        // kick
        3 => {
            let mut p = standard(1.1, 0.0);
            let actor = v.actor;
            let kick = window(t, t0, 0.5 * (t0 + t1), 0.5 * (t0 + t1) + 0.03, t1);
            let f = v.agents[actor].facing;
            let hip = p[actor].hips[0];
            let target = [hip[0] + f * 0.75, 0.45 * v.agents[actor].height, hip[2]];
            p[actor].feet[0] = lerp3(p[actor].feet[0], target, kick);
            p
        }
        // push
        4 => {
            let actor = v.actor;
            let victim = 1 - actor;
            let sep = lerp(2.0, 0.7, approach);
            let shove = ramp(t, 0.5 * (t0 + t1), t1 + 0.1);
            let mut xs = [-sep / 2.0, sep / 2.0];
            xs[victim] += v.agents[victim].facing * -0.6 * shove;
            let mut p = [
                a.rest(xs[0], 0.0, stride, 0.15 * walking),
                b.rest(xs[1], 0.0, stride + 0.5, 0.15 * walking),
            ];
            let reach = window(t, t0, 0.5 * (t0 + t1), t1, t1 + 0.15);
            let chest = p[victim].neck;
            let f = v.agents[actor].facing;
            for side in 0..2 {
                let lateral = if side == 0 { -0.1 } else { 0.1 };
                let target = [chest[0] - f * 0.08, chest[1] - 0.1 * v.agents[victim].height, lateral];
                p[actor].hands[side] = lerp3(p[actor].hands[side], target, reach);
            }
            p
        }
        // walk past
        _ => {
            let s = lerp(-1.3, 1.3, t);
            [a.rest(s, -0.35, stride, 0.15), b.rest(-s, 0.35, stride + 0.5, 0.15)]
        }
    }
}

fn sample_variation(rng: &mut ChaCha8Rng) -> Variation {
    let t0 = rng.gen_range(0.15..0.3);
    Variation {
        agents: [
            Agent { height: rng.gen_range(1.55..1.9), facing: 1.0 },
            Agent { height: rng.gen_range(1.55..1.9), facing: -1.0 },
        ],
        t0,
        t1: t0 + rng.gen_range(0.3..0.4),
        yaw: rng.gen_range(-PI / 6.0..PI / 6.0),
        offset: [rng.gen_range(-0.5..0.5), rng.gen_range(2.0..3.5)],
        actor: rng.gen_range(0..2),
        pump: rng.gen_range(2.0..4.0),
    }
}

/// One video of `class`, deterministic in `rng`.
pub fn generate_video(class: usize, spec: &SyntheticSpec, rng: &mut ChaCha8Rng, source_id: String) -> PointCloudVideo {
    let v = sample_variation(rng);
    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-12)).expect("valid sigma");
    let (sy, cy) = v.yaw.sin_cos();
    let frames = (0..spec.frames_per_video)
        .map(|f| {
            let t = if spec.frames_per_video > 1 {
                f as f64 / (spec.frames_per_video - 1) as f64
            } else {
                0.5
            };
            let ps = poses(class, t, &v);
            let mut points = Vec::with_capacity(10 * spec.points_per_limb);
            for (agent, pose) in v.agents.iter().zip(&ps) {
                for (from, to) in agent.segments(pose) {
                    for _ in 0..spec.points_per_limb {
                        let s = rng.gen_range(0.0..1.0);
                        let p = lerp3(from, to, s).map(|c| c + noise.sample(rng));
                        let x = cy * p[0] + sy * p[2] + v.offset[0];
                        let z = -sy * p[0] + cy * p[2] + v.offset[1];
                        points.push([x, p[1], z]);
                    }
                }
            }
            PointCloudFrame::new(points)
        })
        .collect();
    PointCloudVideo {
        frames,
        label: Some(class as u32),
        source_id,
    }
}

/// All videos of a dataset, class-major, with their file stems.
pub fn generate_videos(spec: &SyntheticSpec, seed: u64) -> Result<Vec<PointCloudVideo>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for class in 0..spec.classes {
        for i in 0..spec.samples_per_class {
            let idx = (class * spec.samples_per_class + i) as u64;
            let mut rng = seed::rng(seed, Stage::Synth, "", idx);
            let id = format!("{}_{i:04}", CLASS_NAMES[class]);
            out.push(generate_video(class, spec, &mut rng, id));
        }
    }
    Ok(out)
}

/// Writes one `.pcv` per video plus `manifest.jsonl` into `out_dir`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let videos = generate_videos(spec, seed)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = String::new();
    let mut entries = Vec::with_capacity(videos.len());
    for v in &videos {
        let file = format!("{}.pcv", v.source_id);
        write_pcv(&out_dir.join(&file), v)?;
        let label = v.label.expect("generated videos are labelled");
        let entry = ManifestEntry {
            file,
            label,
            class_name: CLASS_NAMES[label as usize].to_string(),
        };
        manifest.push_str(&serde_json::to_string(&entry)?);
        manifest.push('\n');
        entries.push(entry);
    }
    let path = out_dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(entries)
}

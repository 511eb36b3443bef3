//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. `ACCEPTANCE_ONLY=2,5` runs a subset.

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmdpt_core::config::{OutputAggregation, RunConfig, TransformerInput};
use tmdpt_core::data::{self, clip_positions, PreparedSample};
use tmdpt_core::encoder::{temporal_position_encoding, FrameGeometry};
use tmdpt_core::geometry::{ball_query, farthest_point_sampling};
use tmdpt_core::ifs::{ifs_step1, ifs_step2, interval_indices, ClipPool, IntervalMode, SamplingMode};
use tmdpt_core::model::Tmdpt;
use tmdpt_core::pointcloud::{
    decode_depth_frame, decode_pcv, encode_depth_frame, encode_pcv, DepthFrame, Intrinsics, Point3, PointCloudFrame,
    PointCloudVideo,
};
use tmdpt_core::synth::{generate_videos, SyntheticSpec};
use tmdpt_core::train::{evaluate_prepared, train_prepared};
use tmdpt_core::transformer::{MultiHeadAttention, TransformerBlock};
use tmdpt_tensor::{checkpoint, Bound, Graph, ParamStore, Tensor};

const GRADCHECK_MAX_REL_ERR: f64 = 1e-4;
const GRADCHECK_MIN_PARAMS: usize = 20;
const GRADCHECK_BUDGET_SECS: f64 = 120.0;
const PARTITION_CLIPS: usize = 100;
const IFS_DRAWS: u64 = 10_000;
/// Upper 1% point of the standard normal, for the 99% chi-square bound.
const Z_99: f64 = 2.326_347_874;
const UNIT_CIRCLE_TOL: f64 = 1e-12;
const ATTENTION_ROW_TOL: f64 = 1e-12;
const GEOMETRY_CASES: usize = 500;
const OVERFIT_SAMPLES: usize = 8;
const OVERFIT_EPOCHS: usize = 200;
const OVERFIT_BUDGET_SECS: f64 = 300.0;
const OVERFIT_LR: f64 = 0.005;
const GENERALIZATION_MIN_ACC: f64 = 0.85;
const GENERALIZATION_EPOCHS: usize = 40;
const GENERALIZATION_TRAIN_PER_CLASS: usize = 100;
const GENERALIZATION_TEST_PER_CLASS: usize = 20;
const GENERALIZATION_BUDGET_SECS: f64 = 1800.0;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// n = 64 points, n1 = 16, n2 = 8, m3 = 16, d_model = 8, 2 heads, 1 block.
fn tiny_config() -> RunConfig {
    RunConfig {
        raw_points_per_frame: 128,
        points_per_frame: 64,
        sa1_centroids: 16,
        sa2_centroids: 8,
        sa1_group_size: 8,
        sa2_group_size: 8,
        sa1_mlp: vec![16],
        sa2_mlp: vec![16],
        frame_mlp: vec![16],
        d_model: 8,
        transformer_heads: 2,
        transformer_blocks: 1,
        batch_size: 8,
        ..RunConfig::default()
    }
}

/// The default config scaled down to n = 256, m3 = 128, d_model = 144,
/// 6 heads, 2 blocks, with proportionally smaller grouping and MLP widths.
fn generalization_config() -> RunConfig {
    RunConfig {
        raw_points_per_frame: 256,
        points_per_frame: 256,
        sa1_centroids: 32,
        sa2_centroids: 8,
        sa1_group_size: 16,
        sa2_group_size: 8,
        sa1_mlp: vec![32],
        sa2_mlp: vec![64],
        frame_mlp: vec![128],
        d_model: 144,
        transformer_heads: 6,
        transformer_blocks: 2,
        epochs: GENERALIZATION_EPOCHS,
        eval_every: 10,
        ..RunConfig::default()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_points(r: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n).map(|_| [0; 3].map(|_| r.gen_range(-1.0..1.0))).collect()
}

fn random_frames(r: &mut ChaCha8Rng, cfg: &RunConfig, q: usize) -> Vec<FrameGeometry> {
    (0..q)
        .map(|_| FrameGeometry::build(&random_points(r, cfg.points_per_frame), &cfg.encoder()).unwrap())
        .collect()
}

fn synthetic(cfg: &RunConfig, per_class: usize, seed: u64) -> Vec<PreparedSample> {
    let spec = SyntheticSpec {
        samples_per_class: per_class,
        ..SyntheticSpec::default()
    };
    data::prepare_all(&generate_videos(&spec, seed).unwrap(), cfg).unwrap()
}

fn tmdpt(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tmdpt"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run tmdpt: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "tmdpt {} exited with {}: {}",
            args.first().unwrap_or(&""),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    cfg.save(&path).unwrap();
    path
}

fn gradient_integrity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.json", &tiny_config());
    let start = Instant::now();
    let out = tmdpt(&["gradcheck", "--config", path_str(&cfg), "--params", "24"])?;
    let secs = start.elapsed().as_secs_f64();
    let mut names = Vec::new();
    let mut max_rel: f64 = 0.0;
    for line in out.lines().skip(1) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() == 5 {
            let rel: f64 = cols[4].parse().map_err(|_| format!("bad row: {line}"))?;
            max_rel = max_rel.max(rel);
            names.push(cols[0].to_string());
        }
    }
    let modules = [
        "sa1.mlp", "sa2.mlp", "sa2.ca", "frame.mlp", "temporal", ".key", ".value", ".query", "ffn", "classifier",
    ];
    let missing: Vec<&str> = modules
        .iter()
        .copied()
        .filter(|m| !names.iter().any(|n| n.contains(m)))
        .collect();
    ensure(names.len() >= GRADCHECK_MIN_PARAMS, || format!("only {} parameters checked", names.len()))?;
    ensure(missing.is_empty(), || format!("modules not sampled: {missing:?}"))?;
    ensure(max_rel < GRADCHECK_MAX_REL_ERR, || format!("max rel err {max_rel:.3e}"))?;
    ensure(secs < GRADCHECK_BUDGET_SECS, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "max rel err {max_rel:.2e} < {GRADCHECK_MAX_REL_ERR:e} over {} parameters in {secs:.1}s",
        names.len()
    ))
}

fn block_ranges(model: &Tmdpt) -> [(&'static str, Range<usize>); 3] {
    [
        ("L", model.layout.local.clone()),
        ("A", model.layout.appearance.clone()),
        ("M", model.layout.motion.clone()),
    ]
}

fn partition_identity() -> Outcome {
    let cfg = tiny_config();
    let mut r = rng(2);
    let mut model = Tmdpt::new(&cfg).unwrap();
    for clip in 0..PARTITION_CLIPS {
        if clip % 10 == 0 {
            model = Tmdpt::new(&RunConfig { seed: clip as u64, ..cfg.clone() }).unwrap();
        }
        let frames = random_frames(&mut r, &cfg, cfg.clip_len());
        let refs: Vec<_> = frames.iter().collect();
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &model.params);
        let out = model.forward(&mut g, &p, &refs).unwrap();
        let s = g.value(out.integrated);
        let width = model.layout.width();
        let rows: Vec<&[f64]> = s.data().chunks(width).collect();
        for (name, block) in block_ranges(&model) {
            for c in block {
                let m = rows[1..].iter().map(|row| row[c]).fold(f64::NEG_INFINITY, f64::max);
                ensure(m == rows[0][c], || format!("clip {clip}, block {name}, channel {c}: {m} vs {}", rows[0][c]))?;
            }
        }
    }
    Ok(format!("{PARTITION_CLIPS} clips, max over {} segments equals S_g exactly in L, A and M", cfg.temporal_segments))
}

fn in_interval(n: usize, k: usize, idx: &[usize]) -> bool {
    idx.len() == k
        && idx.iter().enumerate().all(|(i, &x)| {
            let lo = (i as f64 * n as f64 / k as f64).floor() as usize;
            let hi = ((i + 1) as f64 * n as f64 / k as f64).floor() as usize;
            if hi > lo {
                (lo..hi).contains(&x)
            } else {
                x == lo.min(n - 1)
            }
        })
}

fn ifs_identities() -> Outcome {
    let video = |n: usize, id: &str| PointCloudVideo {
        frames: (0..n).map(|i| PointCloudFrame::new(vec![[i as f64, 0.0, 0.0]])).collect(),
        label: None,
        source_id: id.into(),
    };
    let pool = ifs_step1(&video(50, "fifty"), 50, 1).unwrap();
    ensure(pool.frame_indices == (0..50).collect::<Vec<_>>(), || "N = p pool is not the identity".into())?;

    for (n, k) in [(50, 24), (100, 50), (4, 8)] {
        for seed in 0..200 {
            let idx = interval_indices(n, k, IntervalMode::Random(seed)).unwrap();
            ensure(in_interval(n, k, &idx), || format!("(N={n}, k={k}) seed {seed}: {idx:?}"))?;
        }
        let mid = interval_indices(n, k, IntervalMode::Midpoint).unwrap();
        ensure(in_interval(n, k, &mid), || format!("(N={n}, k={k}) midpoint: {mid:?}"))?;
    }

    let cfg = tiny_config();
    let a = synthetic(&cfg, 1, 3);
    let b = synthetic(&cfg, 1, 3);
    for (x, y) in a.iter().zip(&b) {
        let reference = clip_positions(x, &cfg, 0, true).unwrap();
        for epoch in 0..5 {
            for seed in [0, 17] {
                let other = RunConfig { seed, ..cfg.clone() };
                ensure(clip_positions(y, &other, epoch, true).unwrap() == reference, || {
                    format!("{}: eval clip changed at epoch {epoch}, seed {seed}", x.source_id)
                })?;
            }
        }
        let fa = data::clip_frames(x, &cfg, 0, true).unwrap();
        let fb = data::clip_frames(y, &cfg, 3, true).unwrap();
        ensure(fa.0 == fb.0, || format!("{}: eval clip geometry differs across runs", x.source_id))?;
    }

    let (p, q) = (50usize, 24usize);
    let pl = ClipPool {
        source_id: "chi".into(),
        frame_indices: (0..p).collect(),
    };
    let mut counts = vec![0u64; p];
    for epoch in 0..IFS_DRAWS {
        for x in ifs_step2(&pl, q, epoch, 7, false).unwrap() {
            counts[x] += 1;
        }
    }
    let (mut stat, mut df) = (0.0, 0.0);
    for i in 0..q {
        let (lo, hi) = (i * p / q, (i + 1) * p / q);
        let expected = IFS_DRAWS as f64 / (hi - lo) as f64;
        stat += counts[lo..hi].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum::<f64>();
        df += (hi - lo - 1) as f64;
    }
    // Wilson-Hilferty approximation of the chi-square quantile
    let w = 2.0 / (9.0 * df);
    let critical = df * (1.0 - w + Z_99 * w.sqrt()).powi(3);
    ensure(stat < critical, || format!("chi-square {stat:.2} >= {critical:.2} ({df} dof)"))?;
    Ok(format!("pool identity, interval membership, eval determinism; chi-square {stat:.1} < {critical:.1} ({df} dof, 99%)"))
}

fn encoding_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for m3 in [16, 256] {
        for t in 0..24 {
            let tp = temporal_position_encoding(t, m3).unwrap();
            for pair in tp.chunks(2) {
                worst = worst.max((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs());
            }
        }
    }
    ensure(worst <= UNIT_CIRCLE_TOL, || format!("sin^2 + cos^2 off by {worst:e}"))?;

    let cfg = tiny_config();
    let model = Tmdpt::new(&cfg).unwrap();
    let mut r = rng(4);
    let w = cfg.encoder().region_width();
    let n2 = cfg.sa2_centroids;
    let regions: Vec<f64> = (0..n2 * w).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut perm: Vec<usize> = (0..n2).collect();
    perm.reverse();
    perm.swap(0, 3);
    let permuted: Vec<f64> = perm.iter().flat_map(|&j| regions[j * w..(j + 1) * w].to_vec()).collect();
    let spatial = |data: Vec<f64>| {
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &model.params);
        let x = g.constant(Tensor::new(vec![1, n2, w], data).unwrap());
        let fs = model.encoder.frame_spatial_feature(&mut g, &p, x).unwrap();
        g.value(fs).data().to_vec()
    };
    ensure(spatial(regions) == spatial(permuted), || "FS changed under region-row permutation".into())?;

    let frames = random_frames(&mut r, &cfg, cfg.clip_len());
    let global = |order: &[usize]| {
        let refs: Vec<_> = order.iter().map(|&i| &frames[i]).collect();
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &model.params);
        let out = model.forward(&mut g, &p, &refs).unwrap();
        g.value(out.global).data().to_vec()
    };
    let forward: Vec<usize> = (0..frames.len()).collect();
    let mut shuffled = forward.clone();
    shuffled.reverse();
    shuffled.swap(2, 9);
    let (a, b) = (global(&forward), global(&shuffled));
    let [(_, l), (_, ap), (_, m)] = block_ranges(&model);
    ensure(a[l.clone()] == b[l], || "L_g changed under frame reordering".into())?;
    ensure(a[ap.clone()] == b[ap], || "A_g changed under frame reordering".into())?;
    ensure(a[m.clone()] != b[m], || "M_g did not change under frame reordering".into())?;
    Ok(format!("TP unit-circle error {worst:.1e}; FS row-permutation invariant; reordering changes only M_g"))
}

fn attention_contract() -> Outcome {
    let mut worst: f64 = 0.0;
    for cfg in [tiny_config(), generalization_config()] {
        let model = Tmdpt::new(&cfg).unwrap();
        let frames = random_frames(&mut rng(5), &cfg, cfg.clip_len());
        let refs: Vec<_> = frames.iter().collect();
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &model.params);
        let out = model.forward(&mut g, &p, &refs).unwrap();
        for a in out.head.attention.iter().flatten() {
            let n = g.shape(*a)[1];
            for row in g.value(*a).data().chunks(n) {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                ensure(row.iter().all(|v| (0.0..=1.0).contains(v)), || "attention weight outside [0, 1]".into())?;
            }
        }
    }
    ensure(worst <= ATTENTION_ROW_TOL, || format!("attention row sum off by {worst:e}"))?;

    let mut r = rng(6);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "attn", 8, 2, &mut r);
    let mut g = Graph::new();
    let p = Bound::new(&mut g, &store);
    let token = g.constant(Tensor::matrix(1, 8, (0..8).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap());
    let (_, maps) = mha.forward(&mut g, &p, token).unwrap();
    ensure(maps.iter().all(|a| g.value(*a).data() == [1.0]), || "single-token attention is not 1".into())?;

    let cfg = tiny_config().transformer();
    let mut store = ParamStore::new();
    let block = TransformerBlock::new(&mut store, "block", &cfg, &mut r);
    let row: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut g = Graph::new();
    let p = Bound::new(&mut g, &store);
    let x = g.constant(Tensor::matrix(7, 8, row.repeat(7)).unwrap());
    let (y, _) = block.forward(&mut g, &p, x).unwrap();
    let out = g.value(y).data();
    ensure(out.chunks(8).all(|r| r == &out[..8]), || "identical tokens gave different rows".into())?;
    Ok(format!("row sums within {worst:.1e}; single token attends with weight 1; identical tokens stay identical"))
}

fn geometry_oracles() -> Outcome {
    let dist = |a: &Point3, b: &Point3| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let mut r = rng(7);
    for case in 0..GEOMETRY_CASES {
        let n = r.gen_range(1..=64);
        let pts: Vec<Point3> = if case % 2 == 0 {
            random_points(&mut r, n)
        } else {
            (0..n).map(|_| [0; 3].map(|_| r.gen_range(0..3) as f64 * 0.5)).collect()
        };
        let k = r.gen_range(1..=n);
        let mut oracle = vec![0];
        while oracle.len() < k {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in (0..n).filter(|i| !oracle.contains(i)) {
                let d = oracle.iter().map(|&j| dist(&pts[i], &pts[j])).fold(f64::INFINITY, f64::min);
                if d > best.0 {
                    best = (d, i);
                }
            }
            oracle.push(best.1);
        }
        ensure(farthest_point_sampling(&pts, k).unwrap() == oracle, || format!("FPS case {case} differs"))?;
    }
    let mut members = 0usize;
    for case in 0..GEOMETRY_CASES {
        let n = r.gen_range(1..=100);
        let pts = random_points(&mut r, n);
        let radius = r.gen_range(0.05..1.0);
        let k = r.gen_range(1..=32);
        let centroids: Vec<usize> = (0..r.gen_range(1..=n.min(6))).map(|_| r.gen_range(0..n)).collect();
        let spec = ball_query(&pts, &centroids, radius, k).unwrap();
        for (gi, &c) in centroids.iter().enumerate() {
            let inside: Vec<usize> = (0..n).filter(|&i| i != c && dist(&pts[i], &pts[c]) <= radius).collect();
            let group = spec.group(gi);
            let mut distinct: Vec<usize> = group[1..].to_vec();
            distinct.dedup();
            let expected: Vec<usize> = inside.iter().copied().take(k - 1).collect();
            let unique_tail: Vec<usize> = {
                let mut seen = Vec::new();
                for &i in &group[1..] {
                    if !seen.contains(&i) {
                        seen.push(i);
                    }
                }
                seen
            };
            ensure(group[0] == c, || format!("ball case {case}: centroid not first"))?;
            ensure(
                unique_tail == expected || (expected.is_empty() && unique_tail == [c]),
                || format!("ball case {case}: members {unique_tail:?} vs distance filter {expected:?}"),
            )?;
            ensure(group.iter().all(|&i| dist(&pts[i], &pts[c]) <= radius), || {
                format!("ball case {case}: member outside radius")
            })?;
            members += group.len();
        }
    }
    Ok(format!("FPS = exhaustive greedy on {GEOMETRY_CASES} sets; ball query = distance filter on {GEOMETRY_CASES} sets ({members} members within radius)"))
}

/// One optimizer step per epoch, so the schedule is held flat; halving every
/// ten epochs would leave only a few dozen effective steps.
fn overfit() -> Outcome {
    let cfg = RunConfig {
        epochs: OVERFIT_EPOCHS,
        eval_every: 10,
        lr: OVERFIT_LR,
        lr_decay: 1.0,
        ..tiny_config()
    };
    let mut samples = synthetic(&cfg, 2, 8);
    samples.truncate(OVERFIT_SAMPLES);
    let start = Instant::now();
    let mut first_perfect = None;
    let outcome = train_prepared(&cfg, &samples, Some(&samples), |m| {
        if m.eval_acc == Some(1.0) && first_perfect.is_none() {
            first_perfect = Some(m.epoch + 1);
        }
    })
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let acc = evaluate_prepared(&outcome.model, &samples).unwrap().accuracy;
    ensure(acc == 1.0, || format!("train accuracy {acc:.3} after {OVERFIT_EPOCHS} epochs"))?;
    ensure(secs < OVERFIT_BUDGET_SECS, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{OVERFIT_SAMPLES} samples reach 100% train accuracy (first at epoch {}), {secs:.1}s",
        first_perfect.map_or("?".into(), |e| e.to_string())
    ))
}

fn eval_accuracy(ckpt: &Path, data: &Path) -> Result<f64, String> {
    let out = tmdpt(&["eval", "--ckpt", path_str(ckpt), "--data", path_str(data)])?;
    let report: serde_json::Value = serde_json::from_str(&out).map_err(|e| format!("eval output: {e}"))?;
    report["accuracy"].as_f64().ok_or_else(|| "eval output lacks accuracy".into())
}

fn synthetic_generalization() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for (name, per_class, seed) in [
        ("train", GENERALIZATION_TRAIN_PER_CLASS, "101"),
        ("test", GENERALIZATION_TEST_PER_CLASS, "202"),
    ] {
        let spec = root.join(format!("{name}_spec.json"));
        std::fs::write(&spec, format!("{{\"samples_per_class\": {per_class}}}")).unwrap();
        tmdpt(&["synth", "--spec", path_str(&spec), "--seed", seed, "--out", path_str(&root.join(name))])?;
    }
    let run = |name: &str, two_stream: bool| -> Result<(f64, f64), String> {
        let cfg = RunConfig {
            train_data: Some(root.join("train")),
            eval_data: Some(root.join("test")),
            output_dir: Some(root.join(name)),
            two_stream,
            ..generalization_config()
        };
        let path = write_config(root, &format!("{name}.json"), &cfg);
        let start = Instant::now();
        tmdpt(&["train", "--config", path_str(&path)])?;
        let secs = start.elapsed().as_secs_f64();
        Ok((eval_accuracy(&root.join(name).join("model.tmdp"), &root.join("test"))?, secs))
    };
    let (acc, secs) = run("two_stream", true)?;
    let (ablation, ablation_secs) = run("global_only", false)?;
    let summary = format!(
        "test acc {:.1}% (>= {:.0}%, {secs:.0}s); global-only ablation {:.1}% ({ablation_secs:.0}s)",
        100.0 * acc,
        100.0 * GENERALIZATION_MIN_ACC,
        100.0 * ablation
    );
    ensure(acc >= GENERALIZATION_MIN_ACC, || summary.clone())?;
    ensure(acc > ablation, || format!("{summary}; two-stream does not beat the ablation"))?;
    ensure(secs <= GENERALIZATION_BUDGET_SECS, || format!("{summary}; over the time budget"))?;
    Ok(summary)
}

/// Every ablation axis on the tiny model; fixed-rate clips of k frames are
/// split into segments that tile them.
fn ablation_configs() -> Vec<(String, RunConfig)> {
    let t = tiny_config();
    let mut v: Vec<(String, RunConfig)> = vec![
        ("default".into(), t.clone()),
        ("default widths".into(), RunConfig { batch_size: 2, ..RunConfig::default() }),
        ("global only".into(), RunConfig { two_stream: false, ..t.clone() }),
        ("no transformer".into(), RunConfig { transformer_enabled: false, ..t.clone() }),
        ("motion-only input".into(), RunConfig { transformer_input: TransformerInput::MotionOnly, ..t.clone() }),
        ("maxpool output".into(), RunConfig { transformer_output_agg: OutputAggregation::Maxpool, ..t.clone() }),
        ("no channel attention".into(), RunConfig { channel_attention: false, ..t.clone() }),
        ("literal partial motion".into(), RunConfig { eq6_literal: true, ..t.clone() }),
        ("augmentation".into(), RunConfig { augmentation: true, ..t.clone() }),
        ("256 points".into(), RunConfig { raw_points_per_frame: 256, points_per_frame: 256, ..t.clone() }),
        ("4 frames, overlap 0.5".into(), RunConfig { temporal_segments: 11, segment_overlap: 0.5, ..t.clone() }),
        ("2 frames per segment".into(), RunConfig { temporal_segments: 12, segment_frames: 2, ..t.clone() }),
        ("8 frames per segment".into(), RunConfig { temporal_segments: 3, segment_frames: 8, ..t.clone() }),
        ("single segment".into(), RunConfig { temporal_segments: 1, segment_frames: 24, ..t.clone() }),
    ];
    for (k, ts, u) in [(6, 6, 1), (12, 6, 2), (24, 6, 4), (50, 5, 10)] {
        v.push((
            format!("fixed {k} frames"),
            RunConfig {
                sampling_mode: SamplingMode::FixedUniform(k),
                temporal_segments: ts,
                segment_frames: u,
                ..t.clone()
            },
        ));
    }
    for blocks in 1..=8 {
        v.push((format!("{blocks} blocks"), RunConfig { transformer_blocks: blocks, ..t.clone() }));
    }
    for heads in [1, 2, 4, 8] {
        v.push((format!("{heads} heads"), RunConfig { transformer_heads: heads, ..t.clone() }));
    }
    v
}

fn ablation_reachability() -> Outcome {
    let configs = ablation_configs();
    for (name, cfg) in &configs {
        let cfg = RunConfig {
            epochs: 1,
            ..cfg.clone()
        };
        cfg.validate().map_err(|e| format!("{name}: {e}"))?;
        let mut samples = synthetic(&cfg, 1, 9);
        samples.truncate(2);
        let cfg = RunConfig { batch_size: samples.len(), ..cfg };
        let outcome = train_prepared(&cfg, &samples, None, |_| {}).map_err(|e| format!("{name}: {e}"))?;
        let report = evaluate_prepared(&outcome.model, &samples).map_err(|e| format!("{name}: {e}"))?;
        ensure(report.predictions.len() == samples.len(), || format!("{name}: wrong prediction count"))?;
    }
    Ok(format!("{} configurations each ran one train step and one eval pass", configs.len()))
}

fn format_round_trips() -> Outcome {
    let cfg = RunConfig { epochs: 2, ..tiny_config() };
    let video = generate_videos(&SyntheticSpec { samples_per_class: 1, ..SyntheticSpec::default() }, 10)
        .unwrap()
        .swap_remove(4);
    let bytes = encode_pcv(&video).unwrap();
    let back = decode_pcv(&bytes, &video.source_id).unwrap();
    let quantized = video
        .frames
        .iter()
        .zip(&back.frames)
        .all(|(a, b)| a.points.iter().zip(&b.points).all(|(p, q)| (0..3).all(|c| q[c] == p[c] as f32 as f64)));
    ensure(quantized && back.label == video.label, || "pcv values differ beyond f32 quantization".into())?;
    ensure(encode_pcv(&back).unwrap() == bytes, || "pcv re-encoding differs".into())?;

    let mut r = rng(11);
    let depth = DepthFrame {
        width: 32,
        height: 24,
        depth_mm: (0..32 * 24).map(|_| r.gen_range(0..6000)).collect(),
        intrinsics: Intrinsics { fx: 365.1, fy: 364.9, cx: 15.5, cy: 11.5 },
    };
    let dep = encode_depth_frame(&depth).unwrap();
    let depth_back = decode_depth_frame(&dep).unwrap();
    ensure(depth_back == depth && encode_depth_frame(&depth_back).unwrap() == dep, || "dep round trip differs".into())?;

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "run.json", &cfg);
    let cfg_back = RunConfig::load(&cfg_path).unwrap();
    ensure(cfg_back == cfg && cfg_back.to_json() == std::fs::read_to_string(&cfg_path).unwrap(), || {
        "config round trip differs".into()
    })?;

    let samples = synthetic(&cfg, 1, 12);
    let model = train_prepared(&cfg, &samples, None, |_| {}).map_err(|e| e.to_string())?.model;
    let ckpt = dir.path().join("model.tmdp");
    model.save(&ckpt).unwrap();
    let raw = std::fs::read(&ckpt).unwrap();
    let named = checkpoint::decode(&raw).unwrap();
    ensure(named == model.params.to_named(), || "checkpoint tensors differ".into())?;
    ensure(checkpoint::encode(&named).unwrap() == raw, || "checkpoint re-encoding differs".into())?;
    let reloaded = Tmdpt::load_with_sidecar(&ckpt).unwrap();
    let before = evaluate_prepared(&model, &samples).unwrap();
    let after = evaluate_prepared(&reloaded, &samples).unwrap();
    ensure(before == after, || "reloaded checkpoint evaluates differently".into())?;

    let data_dir = dir.path().join("data");
    tmdpt(&["synth", "--seed", "12", "--out", path_str(&data_dir)]).map(|_| ())?;
    let cli_acc = eval_accuracy(&ckpt, &data_dir)?;
    let lib_acc = evaluate_prepared(&model, &data::load_prepared(&data_dir, &cfg).unwrap()).unwrap().accuracy;
    ensure(cli_acc == lib_acc, || format!("cli eval {cli_acc} vs in-process {lib_acc}"))?;
    Ok(format!("pcv, dep, checkpoint and config round-trip; reload reproduces accuracy {:.4}", before.accuracy))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient integrity", gradient_integrity),
        (2, "partition-max identity", partition_identity),
        (3, "IFS identities", ifs_identities),
        (4, "encoding identities", encoding_identities),
        (5, "attention contract", attention_contract),
        (6, "geometry oracles", geometry_oracles),
        (7, "overfit run", overfit),
        (8, "synthetic generalization", synthetic_generalization),
        (9, "ablation reachability", ablation_reachability),
        (10, "format round-trips", format_round_trips),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

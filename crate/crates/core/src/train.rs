//! Training, evaluation, prediction and the finite-difference gradient check.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use tmdpt_tensor::{adam_step, softmax, AdamState, TensorError};

use crate::config::RunConfig;
use crate::data::{self, clip_frames, PreparedSample};
use crate::error::{io_err, CoreError, Result};
use crate::model::{SampleGradient, Tmdpt};
use crate::pointcloud::PointCloudVideo;
use crate::seed::{self, Stage};
use crate::synth::{self, SyntheticSpec};

pub const CHECKPOINT_FILE: &str = "model.tmdp";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
    pub wall_secs: f64,
}

/// One row per epoch, in epoch order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsLog {
    pub rows: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "epoch,lr,train_loss,train_acc,eval_acc,wall_secs";

    pub fn push(&mut self, row: EpochMetrics) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(CoreError::Contract(format!(
                    "metrics epoch {} after {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let eval = r.eval_acc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{:.3}", r.epoch, r.lr, r.train_loss, r.train_acc, eval, r.wall_secs);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(io_err(path))
    }
}

pub struct TrainOutcome {
    pub model: Tmdpt,
    pub metrics: MetricsLog,
}

fn labelled(samples: &[PreparedSample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| CoreError::Data(format!("{} has no label", s.source_id)))
        })
        .collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn numeric_abort(epoch: usize, batch: usize, lr: f64, detail: String) -> CoreError {
    CoreError::NumericAbort { epoch, batch, lr, detail }
}

fn sample_gradient(model: &Tmdpt, sample: &PreparedSample, label: usize, epoch: usize) -> Result<SampleGradient> {
    let frames = clip_frames(sample, &model.cfg, epoch, false)?;
    model.loss_and_grads(&frames.as_refs(), label)
}

/// One optimizer step over `batch` (indices into `samples`). Per-sample
/// gradients are computed in parallel and summed in batch order.
fn train_batch(
    model: &mut Tmdpt,
    state: &mut AdamState,
    samples: &[PreparedSample],
    labels: &[usize],
    batch: &[usize],
    epoch: usize,
    batch_id: usize,
    lr: f64,
) -> Result<(f64, usize)> {
    let results: Vec<Result<SampleGradient>> = {
        let m = &*model;
        batch
            .par_iter()
            .map(|&i| sample_gradient(m, &samples[i], labels[i], epoch))
            .collect()
    };
    let mut sum: Vec<Vec<f64>> = model.params.sizes().into_iter().map(|n| vec![0.0; n]).collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for (r, &i) in results.into_iter().zip(batch) {
        let sg = match r {
            Ok(sg) => sg,
            Err(CoreError::Tensor(TensorError::NonFinite { op })) => {
                return Err(numeric_abort(epoch, batch_id, lr, format!("non-finite value in {op} for {}", samples[i].source_id)))
            }
            Err(e) => return Err(e),
        };
        if !sg.loss.is_finite() {
            return Err(numeric_abort(epoch, batch_id, lr, format!("loss {} for {}", sg.loss, samples[i].source_id)));
        }
        loss += sg.loss;
        correct += usize::from(argmax(&sg.logits) == labels[i]);
        for (acc, g) in sum.iter_mut().zip(&sg.grads) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in sum.iter_mut().flatten() {
        *g *= scale;
    }
    let grads: Vec<&[f64]> = sum.iter().map(Vec::as_slice).collect();
    let mut params = model.params.data_mut();
    adam_step(&mut params, &grads, state, lr).map_err(|e| match e {
        TensorError::NonFinite { op } => numeric_abort(epoch, batch_id, lr, format!("non-finite update in {op}")),
        other => other.into(),
    })?;
    Ok((loss, correct))
}

/// Trains a fresh model on prepared samples; `on_epoch` sees each row as it
/// is logged.
pub fn train_prepared(
    cfg: &RunConfig,
    train: &[PreparedSample],
    eval: Option<&[PreparedSample]>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(CoreError::Data("training set is empty".into()));
    }
    let labels = labelled(train)?;
    let mut model = Tmdpt::new(cfg)?;
    let mut state = AdamState::new(&model.params.sizes());
    let mut metrics = MetricsLog::default();
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut seed::rng(cfg.seed, Stage::Shuffle, "", epoch as u64));
        let mut loss = 0.0;
        let mut correct = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (l, c) = train_batch(&mut model, &mut state, train, &labels, batch, epoch, b, lr)?;
            loss += l;
            correct += c;
        }
        let eval_acc = match eval {
            Some(set) if (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs => {
                Some(evaluate_prepared(&model, set)?.accuracy)
            }
            _ => None,
        };
        let row = EpochMetrics {
            epoch,
            lr,
            train_loss: loss / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            eval_acc,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        metrics.push(row)?;
    }
    Ok(TrainOutcome { model, metrics })
}

/// Loads the configured datasets, trains, and writes the checkpoint, its
/// config sidecar and the metrics CSV into `output_dir`.
pub fn train(cfg: &RunConfig, on_epoch: impl FnMut(&EpochMetrics)) -> Result<(TrainOutcome, PathBuf)> {
    cfg.validate()?;
    let train_dir = data::resolve(&cfg.train_data, "train_data")?;
    let out_dir = data::resolve(&cfg.output_dir, "output_dir")?;
    let train_set = data::load_prepared(&train_dir, cfg)?;
    let eval_set = cfg.eval_data.as_deref().map(|d| data::load_prepared(d, cfg)).transpose()?;
    let outcome = train_prepared(cfg, &train_set, eval_set.as_deref(), on_epoch)?;
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    outcome.model.save(&ckpt)?;
    outcome.metrics.write(&out_dir.join(METRICS_FILE))?;
    Ok((outcome, ckpt))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes absent from the dataset.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

pub fn evaluate_prepared(model: &Tmdpt, samples: &[PreparedSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(CoreError::Data("evaluation set is empty".into()));
    }
    let labels = labelled(samples)?;
    let predictions = samples
        .par_iter()
        .map(|s| {
            let frames = clip_frames(s, &model.cfg, 0, true)?;
            Ok(argmax(&model.logits(&frames.as_refs())?))
        })
        .collect::<Result<Vec<usize>>>()?;
    let c = model.cfg.num_classes;
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in labels.iter().zip(&predictions) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / samples.len() as f64,
        per_class,
        confusion,
        predictions,
    })
}

pub fn evaluate(model: &Tmdpt, data_dir: &Path) -> Result<EvalReport> {
    evaluate_prepared(model, &data::load_prepared(data_dir, &model.cfg)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

pub fn predict_video(model: &Tmdpt, video: &PointCloudVideo) -> Result<Prediction> {
    let mut video = video.clone();
    video.label = None;
    let sample = data::prepare_video(&video, &model.cfg)?;
    let frames = clip_frames(&sample, &model.cfg, 0, true)?;
    let probabilities = softmax(&model.logits(&frames.as_refs())?);
    Ok(Prediction {
        class: argmax(&probabilities),
        probabilities,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
    pub max_rel_err: f64,
}

pub const GRADCHECK_STEP: f64 = 1e-5;
/// Denominator floor so gradients near zero are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// The gradient-check probe: the first training sample if `train_data` is
/// set, otherwise one synthetic video.
fn gradcheck_sample(cfg: &RunConfig) -> Result<PreparedSample> {
    let video = match &cfg.train_data {
        Some(dir) => data::load_dataset(dir)?.swap_remove(0),
        None => {
            let spec = SyntheticSpec {
                classes: cfg.num_classes.min(synth::CLASS_NAMES.len()),
                samples_per_class: 1,
                ..SyntheticSpec::default()
            };
            synth::generate_videos(&spec, cfg.seed)?.swap_remove(0)
        }
    };
    data::prepare_video(&video, cfg)
}

/// Compares analytic gradients of the full loss with central differences.
/// One scalar is drawn from every parameter tensor, then the rest of the
/// `n_params` budget uniformly over all scalars.
pub fn gradcheck(cfg: &RunConfig, n_params: usize) -> Result<GradcheckReport> {
    let sample = gradcheck_sample(cfg)?;
    let label = sample.label.unwrap_or(0);
    let model = Tmdpt::new(cfg)?;
    let frames = clip_frames(&sample, cfg, 0, true)?;
    let frames = frames.as_refs();
    let analytic = model.loss_and_grads(&frames, label)?.grads;

    let mut rng = seed::rng(cfg.seed, Stage::GradcheckPick, "", 0);
    let sizes = model.params.sizes();
    // Per-tensor picks prefer scalars with a nonzero gradient so dead units
    // do not pass trivially.
    let mut picks: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .map(|(t, g)| {
            let live: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
            let i = if live.is_empty() { rng.gen_range(0..g.len()) } else { live[rng.gen_range(0..live.len())] };
            (t, i)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    while picks.len() < n_params {
        let mut flat = rng.gen_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        picks.push((t, flat));
    }

    let ids: Vec<_> = model.params.ids().collect();
    let rows = picks
        .par_iter()
        .map(|&(t, i)| {
            let mut probe = model.clone();
            let base = probe.params.get(ids[t]).data()[i];
            let mut loss_at = |v: f64| -> Result<f64> {
                probe.params.get_mut(ids[t]).data_mut()[i] = v;
                probe.loss(&frames, label)
            };
            let numeric = (loss_at(base + GRADCHECK_STEP)? - loss_at(base - GRADCHECK_STEP)?) / (2.0 * GRADCHECK_STEP);
            let a = analytic[t][i];
            Ok(GradcheckRow {
                name: model.params.name(ids[t]).to_string(),
                index: i,
                analytic: a,
                numeric,
                rel_err: relative_error(a, numeric),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport { rows, max_rel_err })
}

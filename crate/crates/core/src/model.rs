//! The full network: frame encoder, two-stream aggregation and the
//! transformer classifier, with parameters in one [`ParamStore`].

use std::ops::Range;
use std::path::{Path, PathBuf};

use tmdpt_tensor::{checkpoint, Bound, Graph, ParamStore, TensorError, Var};

use crate::aggregator::{self, FeatureLayout};
use crate::config::{RunConfig, TransformerInput};
use crate::encoder::{FrameEncoder, FrameFeatures, FrameGeometry};
use crate::error::{CoreError, Result};
use crate::seed::{self, Stage};
use crate::transformer::{HeadOutput, TransformerHead};

#[derive(Clone, Debug)]
pub struct Tmdpt {
    pub cfg: RunConfig,
    pub params: ParamStore,
    pub encoder: FrameEncoder,
    pub head: TransformerHead,
    pub layout: FeatureLayout,
    pub segments: Vec<Range<usize>>,
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub features: FrameFeatures,
    pub global: Var,
    pub integrated: Var,
    pub head: HeadOutput,
}

impl ModelOutput {
    pub fn logits(&self) -> Var {
        self.head.logits
    }
}

/// Loss, logits and per-parameter gradients of one labelled clip.
#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: f64,
    pub logits: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

/// Sidecar path holding the config next to a checkpoint.
pub fn config_sidecar(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Tmdpt {
    /// Fresh model with fan-in-scaled uniform weights drawn from `cfg.seed`.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(cfg.seed, Stage::Init, "", 0);
        let mut params = ParamStore::new();
        let enc_cfg = cfg.encoder();
        let encoder = FrameEncoder::new(&mut params, &enc_cfg, &mut rng);
        let layout = FeatureLayout::new(enc_cfg.region_width(), enc_cfg.m3());
        let segments = match cfg.split() {
            Some(spec) => aggregator::temporal_split(cfg.clip_len(), &spec)?,
            None => Vec::new(),
        };
        let input_width = match cfg.transformer_input {
            TransformerInput::MultiLevel => layout.width(),
            TransformerInput::MotionOnly => layout.motion.len(),
        };
        let head = TransformerHead::new(
            &mut params,
            &cfg.transformer(),
            segments.len() + 1,
            input_width,
            layout.width(),
            &mut rng,
        );
        Ok(Self {
            cfg: cfg.clone(),
            params,
            encoder,
            head,
            layout,
            segments,
        })
    }

    pub fn clip_len(&self) -> usize {
        self.cfg.clip_len()
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, frames: &[&FrameGeometry]) -> Result<ModelOutput> {
        if frames.len() != self.clip_len() {
            return Err(CoreError::Contract(format!(
                "model expects {} frames per clip, got {}",
                self.clip_len(),
                frames.len()
            )));
        }
        let features = self.encoder.encode(g, p, frames)?;
        let rows = aggregator::frame_rows(g, &features, self.cfg.eq6_literal)?;
        let global = aggregator::aggregate_global(g, &rows)?;
        let partials = self
            .segments
            .iter()
            .map(|r| aggregator::aggregate_partial(g, &rows, r.clone()))
            .collect::<Result<Vec<_>>>()?;
        let integrated = aggregator::integrate(g, global, &partials)?;
        let input = match self.cfg.transformer_input {
            TransformerInput::MultiLevel => integrated,
            TransformerInput::MotionOnly => g.slice_cols(integrated, self.layout.motion.start, self.layout.motion.end)?,
        };
        let head = self.head.forward(g, p, input, global)?;
        Ok(ModelOutput {
            features,
            global,
            integrated,
            head,
        })
    }

    pub fn logits(&self, frames: &[&FrameGeometry]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &self.params);
        let out = self.forward(&mut g, &p, frames)?;
        Ok(g.value(out.logits()).data().to_vec())
    }

    pub fn loss(&self, frames: &[&FrameGeometry], label: usize) -> Result<f64> {
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &self.params);
        let out = self.forward(&mut g, &p, frames)?;
        let loss = g.cross_entropy(out.logits(), label)?;
        Ok(g.value(loss).data()[0])
    }

    pub fn loss_and_grads(&self, frames: &[&FrameGeometry], label: usize) -> Result<SampleGradient> {
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &self.params);
        let out = self.forward(&mut g, &p, frames)?;
        let loss = g.cross_entropy(out.logits(), label)?;
        let grads = g.backward(loss)?;
        Ok(SampleGradient {
            loss: g.value(loss).data()[0],
            logits: g.value(out.logits()).data().to_vec(),
            grads: p.collect(&g, &grads),
        })
    }

    /// Writes the checkpoint and its config sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write(path, &self.params.to_named())?;
        self.cfg.save(&config_sidecar(path))
    }

    /// Loads weights into a model built from `cfg`; names and shapes must
    /// match exactly.
    pub fn load(path: &Path, cfg: &RunConfig) -> Result<Self> {
        let mut model = Self::new(cfg)?;
        let named = checkpoint::read(path)?;
        model.params.load_named(named).map_err(|e| match e {
            TensorError::Contract(m) => CoreError::Incompatible(m),
            other => CoreError::Tensor(other),
        })?;
        Ok(model)
    }

    /// Loads a checkpoint together with the config sidecar written by
    /// [`Tmdpt::save`].
    pub fn load_with_sidecar(path: &Path) -> Result<Self> {
        let cfg = RunConfig::load(&config_sidecar(path))?;
        Self::load(path, &cfg)
    }
}

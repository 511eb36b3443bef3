//! Self-attention over the aggregated features and the classifier on top.

use rand::Rng;
use tmdpt_tensor::{Bound, Graph, ParamId, ParamStore, Tensor, Var};

use crate::config::{OutputAggregation, TransformerConfig};
use crate::error::Result;
use crate::nn::{Linear, NormParams};

/// Key, value and query projections of one head, each `d_model × d_k`.
#[derive(Clone, Debug)]
pub struct HeadParams {
    pub key: ParamId,
    pub value: ParamId,
    pub query: ParamId,
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: Vec<HeadParams>,
    pub output: Linear,
    pub d_k: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let d_k = d_model / heads;
        let bound = 1.0 / (d_model as f64).sqrt();
        let mut proj = |store: &mut ParamStore, n: String| {
            let data = (0..d_model * d_k).map(|_| rng.gen_range(-bound..bound)).collect();
            store.insert(n, Tensor::matrix(d_model, d_k, data).unwrap())
        };
        let heads = (0..heads)
            .map(|h| HeadParams {
                key: proj(store, format!("{name}.head{h}.key")),
                value: proj(store, format!("{name}.head{h}.value")),
                query: proj(store, format!("{name}.head{h}.query")),
            })
            .collect();
        let output = Linear::new(store, &format!("{name}.out"), d_model, d_model, true, rng);
        Self { heads, output, d_k }
    }

    /// Returns the attended tokens and each head's attention matrix.
    pub fn forward(&self, g: &mut Graph, p: &Bound, tokens: Var) -> Result<(Var, Vec<Var>)> {
        let scale = 1.0 / (self.d_k as f64).sqrt();
        let mut updated = Vec::with_capacity(self.heads.len());
        let mut attention = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let k = g.matmul(tokens, p.var(h.key))?;
            let v = g.matmul(tokens, p.var(h.value))?;
            let q = g.matmul(tokens, p.var(h.query))?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scores = g.scale(scores, scale)?;
            let a = g.softmax_rows(scores)?;
            updated.push(g.matmul(a, v)?);
            attention.push(a);
        }
        let u = g.concat(&updated, 1)?;
        Ok((self.output.forward(g, p, u)?, attention))
    }
}

/// Post-norm block: `x ← LN(x + MHSA(x))`, `x ← LN(x + FFN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub attention: MultiHeadAttention,
    pub norm1: NormParams,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: NormParams,
    pub eps: f64,
}

impl TransformerBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &TransformerConfig, rng: &mut impl Rng) -> Self {
        Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg.d_model, cfg.heads, rng),
            norm1: NormParams::new(store, &format!("{name}.norm1"), cfg.d_model),
            ffn_in: Linear::new(store, &format!("{name}.ffn.0"), cfg.d_model, cfg.ffn_width, true, rng),
            ffn_out: Linear::new(store, &format!("{name}.ffn.1"), cfg.ffn_width, cfg.d_model, true, rng),
            norm2: NormParams::new(store, &format!("{name}.norm2"), cfg.d_model),
            eps: cfg.layer_norm_eps,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<(Var, Vec<Var>)> {
        let (attended, maps) = self.attention.forward(g, p, x)?;
        let x = g.add(x, attended)?;
        let x = self.norm1.forward(g, p, x, self.eps)?;
        let h = self.ffn_in.forward(g, p, x)?;
        let h = g.relu(h)?;
        let h = self.ffn_out.forward(g, p, h)?;
        let x = g.add(x, h)?;
        Ok((self.norm2.forward(g, p, x, self.eps)?, maps))
    }
}

/// Everything after aggregation: optional input projection and transformer
/// blocks, compression of the token rows into one vector, and a classifier
/// fed with that vector concatenated to the raw global feature.
#[derive(Clone, Debug)]
pub struct TransformerHead {
    pub cfg: TransformerConfig,
    pub projection: Option<Linear>,
    pub blocks: Vec<TransformerBlock>,
    pub compress: Option<Linear>,
    pub classifier_hidden: Linear,
    pub classifier_out: Linear,
    pub tokens: usize,
}

/// Intermediate handles of one head pass.
#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub logits: Var,
    pub tokens: Var,
    pub transformed: Var,
    pub attention: Vec<Vec<Var>>,
}

impl TransformerHead {
    /// `tokens` rows of width `input_width` enter; `global_width` is the
    /// width of the raw global feature fused before classification.
    pub fn new(
        store: &mut ParamStore,
        cfg: &TransformerConfig,
        tokens: usize,
        input_width: usize,
        global_width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let projection = cfg
            .enabled
            .then(|| Linear::new(store, "proj", input_width, cfg.d_model, true, rng));
        let blocks = if cfg.enabled {
            (0..cfg.blocks)
                .map(|b| TransformerBlock::new(store, &format!("block{b}"), cfg, rng))
                .collect()
        } else {
            Vec::new()
        };
        let token_width = if cfg.enabled { cfg.d_model } else { input_width };
        let (compress, compressed_width) = match cfg.output_agg {
            OutputAggregation::Mlp => (
                Some(Linear::new(store, "compress", tokens * token_width, cfg.d_model, true, rng)),
                cfg.d_model,
            ),
            OutputAggregation::Maxpool => (None, token_width),
        };
        let classifier_hidden = Linear::new(store, "classifier.0", compressed_width + global_width, cfg.d_model, true, rng);
        let classifier_out = Linear::new(store, "classifier.1", cfg.d_model, cfg.num_classes, true, rng);
        Self {
            cfg: cfg.clone(),
            projection,
            blocks,
            compress,
            classifier_hidden,
            classifier_out,
            tokens,
        }
    }

    /// Row-wise projection to `d_model` (identity when the transformer is off).
    pub fn input_projection(&self, g: &mut Graph, p: &Bound, s: Var) -> Result<Var> {
        match &self.projection {
            Some(l) => l.forward(g, p, s),
            None => Ok(s),
        }
    }

    /// Compression of the transformed rows and the residual classifier.
    pub fn classify(&self, g: &mut Graph, p: &Bound, transformed: Var, global: Var) -> Result<Var> {
        let compressed = match &self.compress {
            Some(l) => {
                let n = g.value(transformed).numel();
                let flat = g.reshape(transformed, &[1, n])?;
                let y = l.forward(g, p, flat)?;
                g.relu(y)?
            }
            None => {
                let (m, _) = g.max_reduce(transformed, 0)?;
                let w = g.value(m).numel();
                g.reshape(m, &[1, w])?
            }
        };
        let gw = g.value(global).numel();
        let global = g.reshape(global, &[1, gw])?;
        let fused = g.concat(&[compressed, global], 1)?;
        let h = self.classifier_hidden.forward(g, p, fused)?;
        let h = g.relu(h)?;
        self.classifier_out.forward(g, p, h)
    }

    /// `s`: `tokens × input_width` transformer input; `global`: raw `S_g`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, s: Var, global: Var) -> Result<HeadOutput> {
        let tokens = self.input_projection(g, p, s)?;
        let mut x = tokens;
        let mut attention = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, maps) = block.forward(g, p, x)?;
            x = y;
            attention.push(maps);
        }
        let logits = self.classify(g, p, x, global)?;
        Ok(HeadOutput {
            logits,
            tokens,
            transformed: x,
            attention,
        })
    }
}

//! Contrastive sequence encoders over tap sequences.
//!
//! A sequence of contact points is lifted per point to `d_model`, encoded by a
//! pre-norm transformer (or a stacked LSTM), mean-pooled, projected to
//! `d_embed` and L2-normalized. Gradients are computed by hand-written reverse
//! passes and checked against finite differences in the tests.

mod attention;
mod layout;
mod loss;
mod ops;
mod recurrent;
mod train;

pub use layout::ParamShape;
pub use loss::{info_nce, triplet};
pub use train::{loss_curve_ok, panel_accuracy, train, Optimizer, TrainConfig, TrainSet};

use crate::interact::TapSequence;
use crate::rng::rng_for;
use attention::{AttentionCache, AttentionNet};
use layout::{Init, LayoutBuilder, Slot};
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use recurrent::{RecurrentCache, RecurrentNet};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Input coordinates are divided by this (cm) so tokens are of order one.
pub const INPUT_SCALE: f64 = 10.0;
const SUBSAMPLE_STREAM: u64 = 0x7373;
const INIT_STREAM: u64 = 0x696e;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty tap sequence")]
    EmptySequence,
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("training diverged: epoch loss {loss:.4} above 10x the initial {initial:.4} for 3 epochs")]
    Diverged { loss: f64, initial: f64 },
    #[error("training data: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Attention,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Infonce,
    Triplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub arch: Arch,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub d_embed: usize,
    pub max_seq_len: usize,
    pub temperature: f64,
    pub loss: LossKind,
    pub triplet_margin: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            arch: Arch::Attention,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            d_embed: 32,
            max_seq_len: 256,
            temperature: 0.1,
            loss: LossKind::Infonce,
            triplet_margin: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::Config(m.to_string()));
        if self.d_model == 0 || self.d_embed == 0 || self.n_layers == 0 || self.max_seq_len == 0 {
            return bad("sizes must be positive");
        }
        if self.arch == Arch::Attention && (self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads)) {
            return bad("d_model must be divisible by n_heads");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.triplet_margin >= 0.0) {
            return bad("triplet margin must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Net {
    Attention(AttentionNet),
    Recurrent(RecurrentNet),
}

enum NetCache {
    Attention(AttentionCache),
    Recurrent(RecurrentCache),
}

impl NetCache {
    fn pooled(&self) -> &Array1<f64> {
        match self {
            NetCache::Attention(c) => &c.pooled,
            NetCache::Recurrent(c) => &c.pooled,
        }
    }
}

#[derive(Debug, Clone)]
struct Built {
    net: Net,
    head_w: Slot,
    head_b: Slot,
    shapes: Vec<ParamShape>,
    inits: Vec<(Slot, Init)>,
    total: usize,
}

fn build(cfg: &EncoderConfig) -> Built {
    let mut lb = LayoutBuilder::default();
    let (net, head_w, head_b) = match cfg.arch {
        Arch::Attention => {
            let n = AttentionNet::build(&mut lb, cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.d_ff, cfg.d_embed, cfg.max_seq_len);
            let (w, b) = (n.head_w, n.head_b);
            (Net::Attention(n), w, b)
        }
        Arch::Recurrent => {
            let n = RecurrentNet::build(&mut lb, cfg.d_model, cfg.n_layers);
            let w = lb.weight("head.weight", cfg.d_model, cfg.d_embed);
            let b = lb.vec("head.bias", cfg.d_embed, Init::Const(0.0));
            (Net::Recurrent(n), w, b)
        }
    };
    Built {
        net,
        head_w,
        head_b,
        shapes: lb.shapes,
        inits: lb.inits,
        total: lb.total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub loss_curve: Vec<f64>,
    #[serde(default)]
    pub steps: usize,
}

/// Encoder parameters (flat, 64-bit) with their named shapes and training metadata.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub params: Vec<f64>,
    pub meta: TrainMeta,
    built: Built,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: EncoderConfig,
    shapes: Vec<ParamShape>,
    params: Vec<f64>,
    meta: TrainMeta,
}

pub(crate) struct Forward {
    cache: NetCache,
    norm: f64,
    pub z: Array1<f64>,
}

impl EncoderModel {
    /// Fresh model with seeded scaled-uniform initialization.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let built = build(&config);
        let mut params = vec![0.0; built.total];
        let mut rng = rng_for(seed, &[INIT_STREAM]);
        for (slot, init) in &built.inits {
            let block = &mut params[slot.off..slot.off + slot.len()];
            match *init {
                Init::Uniform(a) => block.iter_mut().for_each(|v| *v = rng.gen_range(-a..a)),
                Init::Const(c) => block.iter_mut().for_each(|v| *v = c),
                Init::ForgetBias(n) => {
                    for (i, v) in block.iter_mut().enumerate() {
                        *v = if (n..2 * n).contains(&i) { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        Ok(EncoderModel {
            config,
            params,
            meta: TrainMeta {
                seed,
                ..TrainMeta::default()
            },
            built,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn shapes(&self) -> &[ParamShape] {
        &self.built.shapes
    }

    /// Token matrix for a sequence: points scaled to decimetres, subsampled
    /// uniformly without reordering when longer than `max_seq_len`.
    pub fn tokens(&self, seq: &TapSequence) -> Result<Array2<f64>, EncoderError> {
        tokens_for(seq, self.config.max_seq_len, self.meta.seed)
    }

    pub(crate) fn forward(&self, x: &Array2<f64>) -> Forward {
        self.forward_with(&self.params, x)
    }

    pub(crate) fn forward_with(&self, p: &[f64], x: &Array2<f64>) -> Forward {
        let cache = match &self.built.net {
            Net::Attention(n) => NetCache::Attention(n.forward(p, x)),
            Net::Recurrent(n) => NetCache::Recurrent(n.forward(p, x)),
        };
        let e = cache.pooled().dot(&self.built.head_w.mat(p)) + self.built.head_b.vec(p);
        let norm = e.dot(&e).sqrt().max(1e-12);
        Forward { cache, norm, z: e / norm }
    }

    /// Accumulates parameter gradients given `dz`, the gradient at the normalized embedding.
    pub(crate) fn backward(&self, f: &Forward, dz: &Array1<f64>, grad: &mut [f64]) {
        let p = &self.params[..];
        let de = (dz - &(&f.z * f.z.dot(dz))) / f.norm;
        let pooled = f.cache.pooled();
        for (i, pi) in pooled.iter().enumerate() {
            let row = &mut grad[self.built.head_w.off + i * de.len()..self.built.head_w.off + (i + 1) * de.len()];
            for (g, d) in row.iter_mut().zip(de.iter()) {
                *g += pi * d;
            }
        }
        self.built.head_b.acc(grad, de.iter());
        let dpooled = self.built.head_w.mat(p).dot(&de);
        match (&self.built.net, &f.cache) {
            (Net::Attention(n), NetCache::Attention(c)) => n.backward(p, c, &dpooled, grad),
            (Net::Recurrent(n), NetCache::Recurrent(c)) => n.backward(p, c, &dpooled, grad),
            _ => unreachable!("cache built by the same network"),
        }
    }

    pub fn embed_tokens(&self, x: &Array2<f64>) -> Array1<f64> {
        self.forward(x).z
    }

    /// Unit-norm embedding of a tap sequence.
    pub fn embed(&self, seq: &TapSequence) -> Result<Array1<f64>, EncoderError> {
        Ok(self.embed_tokens(&self.tokens(seq)?))
    }

    /// Loss and gradient of a batch of token matrices. For InfoNCE, rows
    /// `2i, 2i + 1` are positive pairs; for triplet, `triples` indexes the batch.
    pub fn batch_loss_grad(&self, batch: &[&Array2<f64>], triples: &[(usize, usize, usize)]) -> (f64, Vec<f64>) {
        let fwd: Vec<Forward> = batch.par_iter().map(|x| self.forward(x)).collect();
        let mut z = Array2::zeros((fwd.len(), self.config.d_embed));
        for (i, f) in fwd.iter().enumerate() {
            z.row_mut(i).assign(&f.z);
        }
        let (loss, dz) = match self.config.loss {
            LossKind::Infonce => info_nce(&z, self.config.temperature),
            LossKind::Triplet => triplet(&z, triples, self.config.triplet_margin),
        };
        let grads: Vec<Option<Vec<f64>>> = fwd
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let d = dz.row(i).to_owned();
                if d.iter().all(|v| *v == 0.0) {
                    return None;
                }
                let mut g = vec![0.0; self.params.len()];
                self.backward(f, &d, &mut g);
                Some(g)
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        for g in grads.into_iter().flatten() {
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        (loss, grad)
    }

    pub fn to_json(&self) -> Result<String, EncoderError> {
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::Checkpoint("refusing to save non-finite parameters".into()));
        }
        Ok(serde_json::to_string(&Checkpoint {
            config: self.config,
            shapes: self.built.shapes.clone(),
            params: self.params.clone(),
            meta: self.meta.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self, EncoderError> {
        let c: Checkpoint = serde_json::from_str(s)?;
        c.config.validate()?;
        let built = build(&c.config);
        if built.shapes != c.shapes {
            return Err(EncoderError::Checkpoint("parameter shapes do not match the config".into()));
        }
        if c.params.len() != built.total {
            return Err(EncoderError::Checkpoint(format!(
                "expected {} parameters, found {}",
                built.total,
                c.params.len()
            )));
        }
        if c.params.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::Checkpoint("non-finite parameter".into()));
        }
        Ok(EncoderModel {
            config: c.config,
            params: c.params,
            meta: c.meta,
            built,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn tokens_for(seq: &TapSequence, max_len: usize, seed: u64) -> Result<Array2<f64>, EncoderError> {
    let n = seq.points.len();
    if n == 0 {
        return Err(EncoderError::EmptySequence);
    }
    let idx: Vec<usize> = if n > max_len {
        let mut rng = rng_for(seed, &[SUBSAMPLE_STREAM, seq.object_id as u64, seq.pose_id as u64, n as u64]);
        let mut v = sample(&mut rng, n, max_len).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    Ok(Array2::from_shape_fn((idx.len(), 3), |(i, j)| {
        let p = seq.points[idx[i]];
        [p.x, p.y, p.z][j] / INPUT_SCALE
    }))
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.dot(b)
}

/// Index of the candidate most similar to `reference`, with every similarity.
/// Empty candidates score negative infinity; ties go to the lowest index.
pub fn identify(model: &EncoderModel, reference: &TapSequence, candidates: &[TapSequence]) -> Result<(usize, Vec<f64>), EncoderError> {
    if candidates.is_empty() {
        return Err(EncoderError::Data("no candidates".into()));
    }
    let r = model.embed(reference)?;
    let sims: Vec<f64> = candidates
        .iter()
        .map(|c| if c.is_empty() { f64::NEG_INFINITY } else { cosine(&r, &model.embed(c).expect("non-empty")) })
        .collect();
    Ok((argmax(&sims), sims))
}

/// First index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

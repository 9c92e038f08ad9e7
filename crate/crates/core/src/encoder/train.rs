//! Contrastive training loop and panel evaluation.

use super::{argmax, tokens_for, EncoderError, EncoderModel, LossKind};
use crate::interact::TapSequence;
use crate::rng::rng_for;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const BATCH_STREAM: u64 = 0x6261;
const PANEL_STREAM: u64 = 0x706e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Positive pairs per batch.
    pub batch_pairs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_pairs: 16,
            learning_rate: 1e-3,
            optimizer: Optimizer::Sgd,
            clip_norm: 5.0,
        }
    }
}

/// Tokenized sequences grouped by object, each group holding one entry per pose.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub objects: Vec<usize>,
    pub groups: Vec<Vec<Array2<f64>>>,
}

impl TrainSet {
    /// Groups non-empty sequences by object id; objects with fewer than two
    /// usable poses cannot form a positive pair and are dropped.
    pub fn from_sequences(seqs: &[TapSequence], max_len: usize, seed: u64) -> Result<Self, EncoderError> {
        let mut by_obj: BTreeMap<usize, Vec<Array2<f64>>> = BTreeMap::new();
        for s in seqs.iter().filter(|s| !s.is_empty()) {
            by_obj.entry(s.object_id).or_default().push(tokens_for(s, max_len, seed)?);
        }
        by_obj.retain(|_, g| g.len() >= 2);
        let (objects, groups) = by_obj.into_iter().unzip();
        Ok(TrainSet { objects, groups })
    }

    pub fn n_sequences(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..p.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g[i] * g[i];
            p[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains `model` in place. Each step draws `B` distinct objects and two
/// distinct poses of each; the loss curve records the mean loss per epoch.
pub fn train(model: &mut EncoderModel, data: &TrainSet, cfg: &TrainConfig, seed: u64) -> Result<Vec<f64>, EncoderError> {
    let n_obj = data.groups.len();
    if n_obj < 2 {
        return Err(EncoderError::Data(format!("need at least 2 objects with 2 poses, have {n_obj}")));
    }
    if n_obj < 20 || data.groups.iter().any(|g| g.len() < 8) {
        log::warn!("training set is small: {n_obj} objects, min {} poses", data.groups.iter().map(Vec::len).min().unwrap_or(0));
    }
    let b = cfg.batch_pairs.min(n_obj).max(2);
    let steps = data.n_sequences().div_ceil(2 * b).max(1);
    let mut rng = rng_for(seed, &[BATCH_STREAM]);
    let mut adam = Adam {
        m: vec![0.0; model.params.len()],
        v: vec![0.0; model.params.len()],
        t: 0,
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut initial = None;
    let mut over = 0;
    let mut order: Vec<usize> = (0..n_obj).collect();
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for step in 0..steps {
            order.partial_shuffle(&mut rng, b);
            let mut batch = Vec::with_capacity(2 * b);
            for &o in &order[..b] {
                let g = &data.groups[o];
                let i = rng.gen_range(0..g.len());
                let j = (i + rng.gen_range(1..g.len())) % g.len();
                batch.push(&g[i]);
                batch.push(&g[j]);
            }
            let triples: Vec<(usize, usize, usize)> = match model.config.loss {
                LossKind::Infonce => Vec::new(),
                LossKind::Triplet => (0..2 * b)
                    .map(|r| {
                        let other = (r / 2 + rng.gen_range(1..b)) % b;
                        (r, r ^ 1, 2 * other + rng.gen_range(0..2))
                    })
                    .collect(),
            };
            let (loss, mut grad) = model.batch_loss_grad(&batch, &triples);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(EncoderError::NonFinite { epoch, step });
            }
            initial.get_or_insert(loss);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in model.params.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam => adam.step(&mut model.params, &grad, cfg.learning_rate),
            }
            total += loss;
        }
        let mean = total / steps as f64;
        curve.push(mean);
        log::info!("epoch {:>3}/{}: loss {:.4}", epoch + 1, cfg.epochs, mean);
        let init = initial.unwrap_or(mean);
        if mean > 10.0 * init {
            over += 1;
            if over >= 3 {
                return Err(EncoderError::Diverged { loss: mean, initial: init });
            }
        } else {
            over = 0;
        }
    }
    model.meta.seed = seed;
    model.meta.epochs += cfg.epochs;
    model.meta.steps += cfg.epochs * steps;
    model.meta.loss_curve.extend_from_slice(&curve);
    Ok(curve)
}

/// True when the 5-epoch trailing moving average never rises over the first
/// half of the curve (tolerance `tol`, absolute).
pub fn loss_curve_ok(curve: &[f64], tol: f64) -> bool {
    const W: usize = 5;
    let half = curve.len() / 2;
    if half < W + 1 {
        return true;
    }
    let ma: Vec<f64> = curve[..half].windows(W).map(|w| w.iter().sum::<f64>() / W as f64).collect();
    ma.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Panel identification accuracy over pre-grouped sequences. Each trial draws
/// `panel` objects; the reference is one pose of the first and the candidates
/// are a different pose of it plus one pose of every other object, shuffled.
pub fn panel_accuracy(model: &EncoderModel, data: &TrainSet, panel: usize, trials: usize, seed: u64) -> f64 {
    let emb: Vec<Vec<Array1<f64>>> = data.groups.iter().map(|g| g.iter().map(|x| model.embed_tokens(x)).collect()).collect();
    let n = emb.len();
    let panel = panel.min(n);
    if trials == 0 || panel < 2 {
        return f64::NAN;
    }
    let mut rng = rng_for(seed, &[PANEL_STREAM]);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut hits = 0;
    for _ in 0..trials {
        idx.partial_shuffle(&mut rng, panel);
        let target = idx[0];
        let g = &emb[target];
        let a = rng.gen_range(0..g.len());
        let b = (a + rng.gen_range(1..g.len())) % g.len();
        let mut cands: Vec<(bool, &Array1<f64>)> = vec![(true, &g[b])];
        for &o in &idx[1..panel] {
            cands.push((false, &emb[o][rng.gen_range(0..emb[o].len())]));
        }
        cands.shuffle(&mut rng);
        let sims: Vec<f64> = cands.iter().map(|(_, c)| g[a].dot(*c)).collect();
        if cands[argmax(&sims)].0 {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

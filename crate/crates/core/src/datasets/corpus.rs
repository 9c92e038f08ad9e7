//! Train/validation splits and tap-sequence corpora.

use super::scenes::{gen_scene, SceneParams};
use super::shapes::{gen_shape, ShapeFamily};
use super::DatasetError;
use crate::geometry::Vec2;
use crate::interact::{collect_taps, TapConfig, TapSequence, TapVariant};
use crate::rng::{derive_seed, rng_for};
use crate::world::ObjectShape;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const SPLIT_STREAM: u64 = 0x7370;
const SHAPE_SEED_STREAM: u64 = 0x7364;
const RECORD_STREAM: u64 = 0x7263;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl SplitManifest {
    /// Shuffles ids `0..n_train + n_val` with `seed` and splits them.
    pub fn new(seed: u64, n_train: usize, n_val: usize) -> Self {
        let mut ids: Vec<usize> = (0..n_train + n_val).collect();
        ids.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
        let val = ids.split_off(n_train);
        let (mut train, mut val) = (ids, val);
        train.sort_unstable();
        val.sort_unstable();
        SplitManifest { seed, train, val }
    }

    pub fn standard(seed: u64) -> Self {
        SplitManifest::new(seed, 120, 30)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let train: BTreeSet<usize> = self.train.iter().copied().collect();
        if train.len() != self.train.len() {
            return Err(DatasetError::Manifest("duplicate training id".into()));
        }
        if let Some(id) = self.val.iter().find(|id| train.contains(id)) {
            return Err(DatasetError::Manifest(format!("id {id} is in both splits")));
        }
        Ok(())
    }

    pub fn family(id: usize) -> ShapeFamily {
        ShapeFamily::ALL[id % ShapeFamily::ALL.len()]
    }

    pub fn shape(&self, id: usize) -> Result<ObjectShape, DatasetError> {
        gen_shape(Self::family(id), derive_seed(self.seed, &[SHAPE_SEED_STREAM, id as u64]))
    }

    pub fn shapes(&self, ids: &[usize]) -> Result<Vec<ObjectShape>, DatasetError> {
        ids.par_iter().map(|&id| self.shape(id)).collect()
    }

    pub fn to_json(&self) -> Result<String, DatasetError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, DatasetError> {
        let m: SplitManifest = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub poses_per_object: usize,
    /// Standard deviation of the simulated centre estimate around the true centroid.
    pub center_noise: f64,
    pub variant: TapVariant,
    pub tap: TapConfig,
    pub scene: SceneParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            poses_per_object: 8,
            center_noise: 1.5,
            variant: TapVariant::Full,
            tap: TapConfig::default(),
            scene: SceneParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub train: Vec<TapSequence>,
    pub val: Vec<TapSequence>,
    pub skipped: usize,
}

/// Taps one object at one random pose in an otherwise empty bin.
///
/// The centre estimate handed to the tapper is the true centroid plus Gaussian
/// noise, standing in for the error of a preceding localization.
pub fn tap_record(
    shape: &ObjectShape,
    object_id: usize,
    pose_id: usize,
    attempt: u64,
    cfg: &CorpusConfig,
    seed: u64,
) -> Result<TapSequence, DatasetError> {
    let rec_seed = derive_seed(seed, &[RECORD_STREAM, object_id as u64, pose_id as u64, attempt]);
    let mut g = gen_scene(std::slice::from_ref(shape), 1, &cfg.scene, rec_seed)?;
    let truth = g.scene.bodies[0].centroid();
    let mut rng = rng_for(rec_seed, &[1]);
    let est = if cfg.center_noise > 0.0 {
        let n = Normal::new(0.0, cfg.center_noise).expect("positive noise");
        truth + Vec2::new(n.sample(&mut rng), n.sample(&mut rng))
    } else {
        truth
    };
    let mut seq = collect_taps(&mut g.scene, est, &cfg.tap, cfg.variant, rec_seed)?;
    seq.object_id = object_id;
    seq.pose_id = pose_id;
    Ok(seq)
}

fn records_for(
    manifest: &SplitManifest,
    ids: &[usize],
    cfg: &CorpusConfig,
    seed: u64,
) -> Result<(Vec<TapSequence>, usize), DatasetError> {
    let shapes = manifest.shapes(ids)?;
    let jobs: Vec<(usize, usize)> = (0..ids.len())
        .flat_map(|i| (0..cfg.poses_per_object).map(move |p| (i, p)))
        .collect();
    let out: Vec<Option<TapSequence>> = jobs
        .par_iter()
        .map(|&(i, p)| -> Result<Option<TapSequence>, DatasetError> {
            for attempt in 0..2 {
                let seq = tap_record(&shapes[i], ids[i], p, attempt, cfg, seed)?;
                if !seq.is_empty() {
                    return Ok(Some(seq));
                }
                log::info!("object {} pose {p}: empty tap sequence (attempt {attempt})", ids[i]);
            }
            log::warn!("object {} pose {p}: skipped after an empty redraw", ids[i]);
            Ok(None)
        })
        .collect::<Result<_, _>>()?;
    let skipped = out.iter().filter(|r| r.is_none()).count();
    Ok((out.into_iter().flatten().collect(), skipped))
}

/// Generates tap sequences for every shape of both splits, in record-id order.
pub fn build_corpus(manifest: &SplitManifest, cfg: &CorpusConfig, seed: u64) -> Result<Corpus, DatasetError> {
    if cfg.poses_per_object < 2 {
        return Err(DatasetError::Manifest("need at least two poses per object".into()));
    }
    manifest.validate()?;
    let (train, s1) = records_for(manifest, &manifest.train, cfg, seed)?;
    let (val, s2) = records_for(manifest, &manifest.val, cfg, seed)?;
    let val_ids: BTreeSet<usize> = manifest.val.iter().copied().collect();
    if train.iter().any(|r| val_ids.contains(&r.object_id)) {
        return Err(DatasetError::Manifest("validation shape leaked into training records".into()));
    }
    Ok(Corpus {
        train,
        val,
        skipped: s1 + s2,
    })
}

pub fn write_ndjson(path: &Path, records: &[TapSequence]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ndjson(path: &Path) -> Result<Vec<TapSequence>, DatasetError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes `train.ndjson`, `val.ndjson` and `manifest.json` into `dir`.
pub fn write_corpus(dir: &Path, manifest: &SplitManifest, corpus: &Corpus) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir)?;
    write_ndjson(&dir.join("train.ndjson"), &corpus.train)?;
    write_ndjson(&dir.join("val.ndjson"), &corpus.val)?;
    std::fs::write(dir.join("manifest.json"), manifest.to_json()?)?;
    Ok(())
}

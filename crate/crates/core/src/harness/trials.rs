use super::{ExperimentConfig, HarnessError};
use crate::datasets::{gen_scene, SceneParams};
use crate::encoder::{identify, EncoderModel};
use crate::geometry::Vec2;
use crate::interact::{collect_taps, grasp, TapSequence, TapVariant};
use crate::localize::{localize_cluster, localize_pf, LocalizationResult};
use crate::rng::{derive_seed, rng_for};
use crate::world::{ObjectShape, Scene};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

const TARGET_STREAM: u64 = 0x7467;
const REFERENCE_STREAM: u64 = 0x7266;
const CANDIDATE_STREAM: u64 = 0x6364;
const NOISE_STREAM: u64 = 0x6e7a;

/// One row of the per-trial CSV. Stage outcomes a protocol does not run stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub condition: String,
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub loc_success: Option<bool>,
    pub loc_error: Option<f64>,
    pub perturbation: Option<f64>,
    pub probes: Option<usize>,
    pub identified: Option<usize>,
    pub truth: Option<usize>,
    pub id_correct: Option<bool>,
    pub tap_points: Option<usize>,
    pub taps: Option<usize>,
    pub tap_displacement: Option<f64>,
    pub grasp_success: Option<bool>,
    /// Grasp at the true target centre before any other stage touched the scene.
    pub grasp_oracle: Option<bool>,
    pub success: Option<bool>,
    #[serde(skip)]
    pub wall_ms: f64,
}

impl TrialRecord {
    fn new(condition: &str, method: &str, trial: usize, seed: u64, k: usize) -> Self {
        TrialRecord {
            condition: condition.to_string(),
            method: method.to_string(),
            trial,
            seed,
            k,
            ..Default::default()
        }
    }

    fn set_localization(&mut self, r: &LocalizationResult) {
        self.loc_success = Some(r.success);
        self.loc_error = Some(r.center_error);
        self.perturbation = Some(r.perturbation);
        self.probes = Some(r.probes_used);
    }
}

/// Taps `shape` alone in the bin at a seeded pose whose location is known exactly.
pub fn reference_taps(
    shape: &ObjectShape,
    params: &SceneParams,
    cfg: &ExperimentConfig,
    variant: TapVariant,
    seed: u64,
) -> Result<TapSequence, HarnessError> {
    let mut g = gen_scene(std::slice::from_ref(shape), 1, params, derive_seed(seed, &[REFERENCE_STREAM]))?;
    let c = g.scene.bodies[0].centroid();
    Ok(collect_taps(&mut g.scene, c, &cfg.tap, variant, derive_seed(seed, &[REFERENCE_STREAM, 1]))?)
}

/// Cluster and particle-filter localization on two copies of the same scene.
/// Returns the cluster record, the filter record and the cluster result.
pub fn localize_trial(
    cfg: &ExperimentConfig,
    pool: &[ObjectShape],
    params: &SceneParams,
    condition: &str,
    trial: usize,
    seed: u64,
) -> Result<(TrialRecord, TrialRecord, LocalizationResult), HarnessError> {
    let g = gen_scene(pool, cfg.k, params, seed)?;
    let t = Instant::now();
    let mut scene = g.scene.clone();
    let cl = localize_cluster(&mut scene, cfg.k, &cfg.localize, seed)?;
    let mut a = TrialRecord::new(condition, "cluster", trial, seed, cfg.k);
    a.set_localization(&cl);
    a.wall_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let mut scene = g.scene;
    let pf = localize_pf(&mut scene, cfg.k, &cfg.pf, &cfg.localize, seed)?;
    let mut b = TrialRecord::new(condition, "pf", trial, seed, cfg.k);
    b.set_localization(&pf);
    b.wall_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok((a, b, cl))
}

/// Identification among `cfg.panel` objects sharing one bin. Every candidate
/// is tapped in place about its true centre plus Gaussian noise of
/// `cfg.center_noise`; the reference is the target tapped alone.
#[allow(clippy::too_many_arguments)]
pub fn identify_trial(
    cfg: &ExperimentConfig,
    pool: &[ObjectShape],
    params: &SceneParams,
    model: &EncoderModel,
    variant: TapVariant,
    condition: &str,
    trial: usize,
    seed: u64,
) -> Result<TrialRecord, HarnessError> {
    let t = Instant::now();
    let mut g = gen_scene(pool, cfg.panel, params, seed)?;
    let target = rng_for(seed, &[TARGET_STREAM]).gen_range(0..cfg.panel);
    let reference = reference_taps(&g.scene.bodies[target].shape, params, cfg, variant, seed)?;
    let mut noise_rng = rng_for(seed, &[NOISE_STREAM]);
    let noise = Normal::new(0.0, cfg.center_noise.max(0.0)).expect("finite std");
    let mut cands = Vec::with_capacity(cfg.panel);
    for i in 0..cfg.panel {
        let c = g.scene.bodies[i].centroid() + Vec2::new(noise.sample(&mut noise_rng), noise.sample(&mut noise_rng));
        let mut s = collect_taps(&mut g.scene, c, &cfg.tap, variant, derive_seed(seed, &[CANDIDATE_STREAM, i as u64]))?;
        s.object_id = i;
        cands.push(s);
    }
    let mut r = TrialRecord::new(condition, variant.name(), trial, seed, cfg.panel);
    r.truth = Some(target);
    r.tap_points = Some(cands[target].len());
    r.taps = Some(cands[target].tap_count);
    r.tap_displacement = Some(cands[target].displacement);
    let picked = pick(model, &reference, &cands)?;
    r.identified = picked;
    r.id_correct = Some(picked == Some(target));
    r.wall_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(r)
}

/// Most similar non-empty candidate, or `None` when nothing can be compared.
fn pick(model: &EncoderModel, reference: &TapSequence, cands: &[TapSequence]) -> Result<Option<usize>, HarnessError> {
    if reference.is_empty() || cands.iter().all(TapSequence::is_empty) {
        return Ok(None);
    }
    Ok(Some(identify(model, reference, cands)?.0))
}

/// Localize, tap every estimated centre, identify the target against its
/// reference and grasp at the chosen centre. A failed localization ends the
/// trial as a failure.
pub fn run_pipeline_trial(
    scene: Scene,
    target: usize,
    reference: &TapSequence,
    model: &EncoderModel,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(TrialRecord, LocalizationResult), HarnessError> {
    let t = Instant::now();
    let k = scene.bodies.len();
    let mut r = TrialRecord::new("", "pipeline", 0, seed, k);
    let mut oracle_scene = scene.clone();
    let g = grasp(&mut oracle_scene, scene.bodies[target].centroid(), &cfg.grasp);
    r.grasp_oracle = Some(g.success && g.body == Some(target));

    let mut scene = scene;
    let loc = localize_cluster(&mut scene, k, &cfg.localize, seed)?;
    r.set_localization(&loc);
    if !loc.success {
        r.success = Some(false);
        r.wall_ms = t.elapsed().as_secs_f64() * 1e3;
        return Ok((r, loc));
    }
    let centers = &loc.estimate.centers;
    r.truth = centers
        .iter()
        .position(|c| scene.nearest_body(*c).map(|(i, _)| i) == Some(target));
    let mut cands = Vec::with_capacity(centers.len());
    for (j, c) in centers.iter().enumerate() {
        let mut s = collect_taps(&mut scene, *c, &cfg.tap, TapVariant::Full, derive_seed(seed, &[CANDIDATE_STREAM, j as u64]))?;
        s.object_id = j;
        cands.push(s);
    }
    if let Some(tr) = r.truth {
        r.tap_points = Some(cands[tr].len());
        r.taps = Some(cands[tr].tap_count);
        r.tap_displacement = Some(cands[tr].displacement);
    }
    let picked = pick(model, reference, &cands)?;
    r.identified = picked;
    let correct = picked.is_some() && picked == r.truth;
    r.id_correct = Some(correct);
    let grasped = match picked {
        Some(j) => {
            let g = grasp(&mut scene, centers[j], &cfg.grasp);
            g.success && g.body == Some(target)
        }
        None => false,
    };
    r.grasp_success = Some(grasped);
    r.success = Some(loc.success && correct && grasped);
    r.wall_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok((r, loc))
}

/// Seeded K-object scene, random target and its isolated reference, then the pipeline.
pub(crate) fn pipeline_trial(
    cfg: &ExperimentConfig,
    pool: &[ObjectShape],
    params: &SceneParams,
    model: &EncoderModel,
    condition: &str,
    trial: usize,
    seed: u64,
) -> Result<(TrialRecord, LocalizationResult), HarnessError> {
    let g = gen_scene(pool, cfg.k, params, seed)?;
    let target = rng_for(seed, &[TARGET_STREAM]).gen_range(0..cfg.k);
    let reference = reference_taps(&g.scene.bodies[target].shape, params, cfg, TapVariant::Full, seed)?;
    let (mut r, loc) = run_pipeline_trial(g.scene, target, &reference, model, cfg, seed)?;
    r.condition = condition.to_string();
    r.trial = trial;
    Ok((r, loc))
}

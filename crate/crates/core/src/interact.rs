//! Radial tapping with relocalization, its ablation variants, and the caging grasp.

use crate::geometry::{Vec2, Vec3};
use crate::rng::rng_for;
use crate::world::{close_fingers, ContactEvent, ContactTarget, Scene, SensorModel, Stroke};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const FINGERS: usize = 3;
/// A centre estimate farther than this from every body footprint taps nothing.
pub const NEIGHBORHOOD: f64 = 7.5;
pub const NOISY_THRESHOLD: f64 = 0.5;
pub const NOISY_DROP: f64 = 0.2;
pub const GRASP_DEPTH: f64 = 0.2;

const TAP_STREAM: u64 = 0x7461;

#[derive(Debug, Error)]
pub enum InteractError {
    #[error("invalid tap config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TapConfig {
    pub start_radius: f64,
    pub min_radius: f64,
    pub inward_step: f64,
    pub z_start: f64,
    pub z_step: f64,
    pub z_max: f64,
    pub gamma: f64,
    pub max_taps: usize,
}

impl Default for TapConfig {
    fn default() -> Self {
        TapConfig {
            start_radius: 12.0,
            min_radius: 1.0,
            inward_step: 0.2,
            z_start: 1.0,
            z_step: 0.5,
            z_max: 20.0,
            gamma: 0.9,
            max_taps: 100,
        }
    }
}

impl TapConfig {
    pub fn validate(&self, finger_radius: f64) -> Result<(), InteractError> {
        if !(self.start_radius > self.min_radius && self.min_radius > finger_radius - 1e-12) {
            return Err(InteractError::Config("need start_radius > min_radius >= finger radius".into()));
        }
        if !(self.z_step > 0.0) {
            return Err(InteractError::Config("z_step must be positive".into()));
        }
        if !(self.inward_step > 0.0 && self.inward_step <= 0.5) {
            return Err(InteractError::Config("inward_step must lie in (0, 0.5]".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) && self.gamma != 1.0 {
            return Err(InteractError::Config("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapVariant {
    Full,
    NoReloc,
    Noisy,
}

impl TapVariant {
    pub const ALL: [TapVariant; 3] = [TapVariant::Full, TapVariant::NoReloc, TapVariant::Noisy];

    pub fn name(self) -> &'static str {
        match self {
            TapVariant::Full => "full",
            TapVariant::NoReloc => "no_reloc",
            TapVariant::Noisy => "noisy",
        }
    }

    fn sensor(self, threshold: f64) -> SensorModel {
        match self {
            TapVariant::Noisy => SensorModel {
                threshold: NOISY_THRESHOLD,
                drop_prob: NOISY_DROP,
            },
            _ => SensorModel::exact(threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSequence {
    pub object_id: usize,
    pub pose_id: usize,
    /// Contact points relative to the initial centre estimate (z unchanged).
    pub points: Vec<Vec3>,
    #[serde(default)]
    pub tap_count: usize,
    pub displacement: f64,
}

impl TapSequence {
    pub fn empty(object_id: usize, pose_id: usize) -> Self {
        TapSequence {
            object_id,
            pose_id,
            points: Vec::new(),
            tap_count: 0,
            displacement: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Exponential smoothing of a centre estimate toward the planar mean of tap contacts.
/// No contacts leaves the estimate unchanged.
pub fn relocalize(c_hat: Vec2, contacts: &[Vec3], gamma: f64) -> Vec2 {
    if contacts.is_empty() {
        return c_hat;
    }
    let mut mean = Vec2::ZERO;
    for p in contacts {
        mean += p.xy();
    }
    mean = mean * (1.0 / contacts.len() as f64);
    c_hat * gamma + mean * (1.0 - gamma)
}

fn finger_dir(i: usize) -> Vec2 {
    let a = 2.0 * PI * i as f64 / FINGERS as f64;
    Vec2::new(a.cos(), a.sin())
}

fn clamp_xy(p: Vec2, side: f64) -> Vec2 {
    Vec2::new(p.x.clamp(0.0, side), p.y.clamp(0.0, side))
}

/// Places the three fingers on a circle of `start` radius about `c` and closes them
/// concurrently toward radius `stop`. Returns the contact of each finger.
#[allow(clippy::too_many_arguments)]
fn close_hand<R: rand::Rng + ?Sized>(
    scene: &mut Scene,
    c: Vec2,
    z: f64,
    start: f64,
    stop: f64,
    step: f64,
    sensor: &SensorModel,
    rng: &mut R,
) -> Vec<Option<ContactEvent>> {
    let side = scene.bin_side;
    let mut strokes: Vec<Stroke> = (0..FINGERS)
        .map(|i| {
            let d = finger_dir(i);
            let from = clamp_xy(c + d * start, side);
            let to = clamp_xy(c + d * stop, side);
            Stroke::new(i, Vec3::from_xy(from, z), Vec3::from_xy(to, z), step)
        })
        .collect();
    close_fingers(scene, &mut strokes, sensor, rng);
    strokes.into_iter().map(|s| s.event).collect()
}

/// Radial tapping about `center_est`.
///
/// Each tap closes the three fingers at one height and records at most one
/// contact per finger. Tapping climbs by `z_step` until a level produces no
/// contact, `z_max` is exceeded, or `max_taps` is reached.
pub fn collect_taps(
    scene: &mut Scene,
    center_est: Vec2,
    cfg: &TapConfig,
    variant: TapVariant,
    seed: u64,
) -> Result<TapSequence, InteractError> {
    cfg.validate(scene.physics.finger_radius)?;
    let mut seq = TapSequence::empty(0, 0);
    let tracked = match scene.nearest_body(center_est) {
        Some((i, d)) if d <= NEIGHBORHOOD => i,
        _ => return Ok(seq),
    };
    let start_centroid = scene.bodies[tracked].centroid();
    let sensor = variant.sensor(scene.physics.contact_threshold);
    let mut rng = rng_for(seed, &[TAP_STREAM]);
    let mut c = center_est;
    let mut z = cfg.z_start;
    while seq.tap_count < cfg.max_taps && z <= cfg.z_max + 1e-9 {
        seq.tap_count += 1;
        let events = close_hand(scene, c, z, cfg.start_radius, cfg.min_radius, cfg.inward_step, &sensor, &mut rng);
        let contacts: Vec<Vec3> = events
            .iter()
            .flatten()
            .filter(|e| matches!(e.target, ContactTarget::Body(_)))
            .map(|e| e.point)
            .collect();
        if contacts.is_empty() {
            break;
        }
        for p in &contacts {
            seq.points.push(Vec3::new(p.x - center_est.x, p.y - center_est.y, p.z));
        }
        if variant != TapVariant::NoReloc {
            c = relocalize(c, &contacts, cfg.gamma);
        }
        z += cfg.z_step;
    }
    seq.displacement = scene.bodies[tracked].centroid().distance(start_centroid);
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    pub start_radius: f64,
    pub min_radius: f64,
    pub step: f64,
    /// Penetration each fingertip must reach to count as holding.
    pub depth: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        GraspConfig {
            start_radius: 12.0,
            min_radius: 1.0,
            step: 0.2,
            depth: GRASP_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspResult {
    pub success: bool,
    pub contacts: Vec<ContactEvent>,
    pub caged: bool,
    pub body: Option<usize>,
}

/// Strict point-in-triangle test, orientation agnostic.
pub fn strictly_inside_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> bool {
    let s1 = (b - a).cross(p - a);
    let s2 = (c - b).cross(p - b);
    let s3 = (a - c).cross(p - c);
    (s1 > 0.0 && s2 > 0.0 && s3 > 0.0) || (s1 < 0.0 && s2 < 0.0 && s3 < 0.0)
}

/// Caging grasp about `center_est` at half the height of the body nearest the estimate.
/// Lifting is not simulated: a caged body counts as grasped.
pub fn grasp(scene: &mut Scene, center_est: Vec2, cfg: &GraspConfig) -> GraspResult {
    let r = scene.physics.finger_radius;
    let z = scene
        .nearest_body(center_est)
        .map_or(r, |(i, _)| (0.5 * scene.bodies[i].shape.height()).max(r));
    let sensor = SensorModel::exact(cfg.depth);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let events = close_hand(scene, center_est, z, cfg.start_radius, cfg.min_radius, cfg.step, &sensor, &mut rng);
    let contacts: Vec<ContactEvent> = events.iter().flatten().copied().collect();
    let bodies: Vec<Option<usize>> = events.iter().map(|e| e.and_then(|e| e.target.body())).collect();
    let body = bodies[0].filter(|b| bodies.iter().all(|x| *x == Some(*b)));
    let caged = match body {
        Some(b) => {
            let tips: Vec<Vec2> = contacts.iter().map(|e| e.point.xy()).collect();
            strictly_inside_triangle(scene.bodies[b].centroid(), tips[0], tips[1], tips[2])
        }
        None => false,
    };
    GraspResult {
        success: caged,
        contacts,
        caged,
        body,
    }
}

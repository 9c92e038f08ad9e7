//! Fingertip motion and binary contact sensing.
//!
//! A finger advances in straight increments. Overlap created by an increment
//! pushes movable bodies; the sensor fires once the remaining overlap reaches the
//! threshold. The increment that crosses the threshold is bisected so the
//! detected overlap equals the threshold regardless of the commanded step,
//! which keeps results stable under step refinement.

use super::{Scene, WorldError};
use crate::geometry::{Vec2, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};

const BISECTION_ITERS: usize = 40;
const ARRIVAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactTarget {
    Body(usize),
    Floor,
}

impl ContactTarget {
    pub fn body(self) -> Option<usize> {
        match self {
            ContactTarget::Body(i) => Some(i),
            ContactTarget::Floor => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub finger_id: usize,
    /// Fingertip centre after it is resolved onto the surface.
    pub point: Vec3,
    pub target: ContactTarget,
    pub normal: Vec3,
    /// Overlap at the moment of detection.
    pub depth: f64,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finger {
    pub id: usize,
    pub position: Vec3,
    pub contact: bool,
    pub contact_normal: Option<Vec3>,
}

impl Finger {
    pub fn new(id: usize, position: Vec3) -> Self {
        Finger {
            id,
            position,
            contact: false,
            contact_normal: None,
        }
    }
}

/// Binary contact sensor: fires at `threshold` overlap, except that each detection
/// opportunity is missed with probability `drop_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub threshold: f64,
    pub drop_prob: f64,
}

impl SensorModel {
    pub fn exact(threshold: f64) -> Self {
        SensorModel {
            threshold,
            drop_prob: 0.0,
        }
    }
}

/// One finger's straight-line motion toward a target.
#[derive(Debug, Clone)]
pub struct Stroke {
    pub finger_id: usize,
    pub position: Vec3,
    pub target: Vec3,
    pub step: f64,
    pub done: bool,
    pub event: Option<ContactEvent>,
    started: bool,
}

impl Stroke {
    pub fn new(finger_id: usize, start: Vec3, target: Vec3, step: f64) -> Self {
        Stroke {
            finger_id,
            position: start,
            target,
            step,
            done: false,
            event: None,
            started: false,
        }
    }

    fn remaining(&self) -> f64 {
        self.target.distance(self.position)
    }
}

/// Pushes every movable body that the move `from -> to` newly overlaps.
fn advance(scene: &mut Scene, from: Vec3, to: Vec3) {
    if scene.static_mode {
        return;
    }
    let r = scene.physics.finger_radius;
    for i in 0..scene.bodies.len() {
        let raw = match scene.bodies[i].sphere_penetration(to, r) {
            Some(p) => p,
            None => continue,
        };
        let before = scene.bodies[i]
            .sphere_penetration(from, r)
            .map_or(0.0, |p| p.depth);
        let inc = raw.depth - before;
        if inc <= 0.0 {
            continue;
        }
        let h = raw.normal.xy();
        let hn = h.norm();
        if hn <= 1e-9 {
            continue;
        }
        scene.push_body(i, raw.surface_point.xy(), inc * hn, -h * (1.0 / hn));
    }
}

fn detect(scene: &Scene, at: Vec3, threshold: f64) -> Option<(usize, crate::geometry::SpherePenetration)> {
    scene
        .max_penetration(at)
        .filter(|(_, p)| p.depth >= threshold)
}

fn make_event(scene: &Scene, finger_id: usize, at: Vec3, idx: usize, pen: crate::geometry::SpherePenetration) -> ContactEvent {
    ContactEvent {
        finger_id,
        point: at + pen.normal * pen.depth,
        target: super::ContactTarget::Body(idx),
        normal: pen.normal,
        depth: pen.depth,
        tick: scene.tick,
    }
}

/// Advances `stroke` by one increment. Returns true while the finger keeps moving.
pub(crate) fn step_stroke<R: Rng + ?Sized>(
    scene: &mut Scene,
    stroke: &mut Stroke,
    sensor: &SensorModel,
    rng: &mut R,
) -> bool {
    if stroke.done {
        return false;
    }
    if !stroke.started {
        stroke.started = true;
        if let Some((i, pen)) = detect(scene, stroke.position, sensor.threshold) {
            let ev = make_event(scene, stroke.finger_id, stroke.position, i, pen);
            stroke.position = ev.point;
            stroke.event = Some(ev);
            stroke.done = true;
            return false;
        }
    }
    let remaining = stroke.remaining();
    if remaining <= ARRIVAL_EPS {
        stroke.done = true;
        return false;
    }
    scene.tick += 1;
    let adv = stroke.step.min(remaining);
    let dir = (stroke.target - stroke.position) * (1.0 / remaining);
    let from = stroke.position;
    let to = if adv >= remaining { stroke.target } else { from + dir * adv };
    let already_over = detect(scene, from, sensor.threshold).is_some();
    let snapshot = scene.poses();
    advance(scene, from, to);
    let hit = detect(scene, to, sensor.threshold);
    if let Some(first) = hit {
        let dropped = sensor.drop_prob > 0.0 && rng.gen::<f64>() < sensor.drop_prob;
        if !dropped {
            let (at, (i, pen)) = if already_over {
                (to, first)
            } else {
                // smallest fraction of the increment that reaches the threshold
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..BISECTION_ITERS {
                    let mid = 0.5 * (lo + hi);
                    scene.restore_poses(&snapshot);
                    let p = from + dir * (adv * mid);
                    advance(scene, from, p);
                    if detect(scene, p, sensor.threshold).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                scene.restore_poses(&snapshot);
                let p = from + dir * (adv * hi);
                advance(scene, from, p);
                let found = detect(scene, p, sensor.threshold)
                    .or_else(|| scene.max_penetration(p))
                    .expect("bisection bracket lost its contact");
                (p, found)
            };
            let ev = make_event(scene, stroke.finger_id, at, i, pen);
            stroke.position = ev.point;
            stroke.event = Some(ev);
            stroke.done = true;
            return false;
        }
    }
    stroke.position = to;
    if adv >= remaining {
        stroke.done = true;
        return false;
    }
    true
}

/// Moves several fingers concurrently, one increment each in round-robin order,
/// until every stroke has stopped.
pub fn close_fingers<R: Rng + ?Sized>(
    scene: &mut Scene,
    strokes: &mut [Stroke],
    sensor: &SensorModel,
    rng: &mut R,
) {
    loop {
        let mut moving = false;
        for s in strokes.iter_mut() {
            moving |= step_stroke(scene, s, sensor, rng);
        }
        if !moving {
            break;
        }
    }
}

/// Moves one finger toward `target` with the scene's exact contact sensor.
/// Returns the contact events in order (at most one, since motion stops at first contact).
pub fn move_finger(
    scene: &mut Scene,
    finger: &mut Finger,
    target: Vec3,
    step: f64,
) -> Result<Vec<ContactEvent>, WorldError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(WorldError::BadStep(step));
    }
    if !scene.contains_point(target) {
        return Err(WorldError::OutsideBin {
            x: target.x,
            y: target.y,
            z: target.z,
        });
    }
    let sensor = SensorModel::exact(scene.physics.contact_threshold);
    let mut stroke = Stroke::new(finger.id, finger.position, target, step);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    while step_stroke(scene, &mut stroke, &sensor, &mut rng) {}
    finger.position = stroke.position;
    finger.contact = stroke.event.is_some();
    finger.contact_normal = stroke.event.map(|e| e.normal);
    Ok(stroke.event.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Start height of the fingertip centre; above every object.
    pub z_start: f64,
    pub step: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            z_start: 25.0,
            step: 0.5,
        }
    }
}

/// Lowers a fingertip vertically at `(x, y)` until the first contact or the floor.
pub fn probe_descend(scene: &mut Scene, xy: Vec2, probe: &ProbeConfig) -> Result<ContactEvent, WorldError> {
    if !scene.contains_xy(xy) {
        return Err(WorldError::OutsideBin {
            x: xy.x,
            y: xy.y,
            z: probe.z_start,
        });
    }
    let r = scene.physics.finger_radius;
    let sensor = SensorModel::exact(scene.physics.contact_threshold);
    let mut stroke = Stroke::new(0, Vec3::from_xy(xy, probe.z_start.max(r)), Vec3::from_xy(xy, r), probe.step);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    while step_stroke(scene, &mut stroke, &sensor, &mut rng) {}
    Ok(stroke.event.unwrap_or(ContactEvent {
        finger_id: 0,
        point: Vec3::from_xy(xy, r),
        target: ContactTarget::Floor,
        normal: Vec3::new(0.0, 0.0, 1.0),
        depth: 0.0,
        tick: scene.tick,
    }))
}

//! Planar quasi-static simulation of rigid movable objects in a square bin.
//!
//! Objects are extruded stacks of convex footprints resting on the floor. A
//! spherical fingertip reports binary contact once its overlap with a body
//! reaches the sensor threshold; overlap created before that pushes movable
//! bodies with the quasi-static rule in [`physics::push_response`].

mod contact;
pub mod physics;

pub use contact::{
    close_fingers, move_finger, probe_descend, ContactEvent, ContactTarget, Finger, ProbeConfig,
    SensorModel, Stroke,
};
pub use physics::{push_response, PushParams};

use crate::geometry::{
    sphere_prism_penetration, ConvexPolygon, GeometryError, Isometry2, SpherePenetration, Vec2,
    Vec3,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const DEFAULT_BIN_SIDE: f64 = 60.0;
pub const DEFAULT_MASS: f64 = 0.2;
pub const DEFAULT_FRICTION: f64 = 0.5;
pub const MAX_OBJECT_HEIGHT: f64 = 20.0;
pub const MIN_DIAMETER: f64 = 8.0;
pub const MAX_DIAMETER: f64 = 16.0;
pub const MAX_PIECES_PER_SLICE: usize = 4;
/// Vertical extent of the reachable workspace above the bin floor.
pub const BIN_HEIGHT: f64 = 40.0;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("point ({x:.3}, {y:.3}, {z:.3}) lies outside the bin workspace")]
    OutsideBin { x: f64, y: f64, z: f64 },
    #[error("finger step {0} outside (0, 0.5] cm")]
    BadStep(f64),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Contact and push constants shared by every query on a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Push stiffness κ in kg⁻¹; β = 1 / (1 + κ μ m).
    pub kappa: f64,
    pub finger_radius: f64,
    /// Binary contact threshold ε_c on penetration depth.
    pub contact_threshold: f64,
    /// Tolerance for surface residuals and body-body overlap.
    pub surface_tolerance: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            kappa: 10.0,
            finger_radius: 1.0,
            contact_threshold: 0.05,
            surface_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub z_lo: f64,
    pub z_hi: f64,
    pub footprint: Vec<ConvexPolygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRecord", into = "ShapeRecord")]
pub struct ObjectShape {
    label: String,
    slices: Vec<Slice>,
    #[serde(skip)]
    gyration_sq: f64,
}

#[derive(Serialize, Deserialize)]
struct ShapeRecord {
    label: String,
    slices: Vec<Slice>,
}

impl TryFrom<ShapeRecord> for ObjectShape {
    type Error = WorldError;
    fn try_from(r: ShapeRecord) -> Result<Self, WorldError> {
        ObjectShape::new(r.label, r.slices)
    }
}

impl From<ObjectShape> for ShapeRecord {
    fn from(s: ObjectShape) -> Self {
        ShapeRecord {
            label: s.label,
            slices: s.slices,
        }
    }
}

impl ObjectShape {
    pub fn new(label: impl Into<String>, slices: Vec<Slice>) -> Result<Self, WorldError> {
        let label = label.into();
        if slices.is_empty() {
            return Err(WorldError::InvalidShape("no slices".into()));
        }
        let mut prev_hi = 0.0;
        for (i, s) in slices.iter().enumerate() {
            if !(s.z_lo >= 0.0 && s.z_hi > s.z_lo) {
                return Err(WorldError::InvalidShape(format!("slice {i} has bad z range")));
            }
            if i > 0 && s.z_lo < prev_hi - 1e-9 {
                return Err(WorldError::InvalidShape(format!("slice {i} overlaps slice {}", i - 1)));
            }
            if s.footprint.is_empty() || s.footprint.len() > MAX_PIECES_PER_SLICE {
                return Err(WorldError::InvalidShape(format!(
                    "slice {i} has {} footprint pieces",
                    s.footprint.len()
                )));
            }
            prev_hi = s.z_hi;
        }
        if prev_hi > MAX_OBJECT_HEIGHT + 1e-9 {
            return Err(WorldError::InvalidShape(format!("height {prev_hi} exceeds {MAX_OBJECT_HEIGHT}")));
        }
        let mut shape = ObjectShape {
            label,
            slices,
            gyration_sq: 0.0,
        };
        let d = shape.diameter();
        if !(MIN_DIAMETER - 1e-9..=MAX_DIAMETER + 1e-9).contains(&d) {
            return Err(WorldError::InvalidShape(format!("diameter {d:.3} outside [8, 16] cm")));
        }
        shape.gyration_sq = shape.compute_gyration_sq();
        Ok(shape)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn height(&self) -> f64 {
        self.slices.last().map_or(0.0, |s| s.z_hi)
    }

    /// Largest vertex-to-vertex distance across all slices.
    pub fn diameter(&self) -> f64 {
        let verts: Vec<Vec2> = self
            .slices
            .iter()
            .flat_map(|s| s.footprint.iter().flat_map(|p| p.vertices().iter().copied()))
            .collect();
        let mut d: f64 = 0.0;
        for i in 0..verts.len() {
            for j in (i + 1)..verts.len() {
                d = d.max(verts[i].distance(verts[j]));
            }
        }
        d
    }

    /// Volume-weighted planar centroid in the object frame.
    pub fn centroid(&self) -> Vec2 {
        let mut acc = Vec2::ZERO;
        let mut vol = 0.0;
        for s in &self.slices {
            let h = s.z_hi - s.z_lo;
            for p in &s.footprint {
                let a = p.area() * h;
                acc += p.centroid() * a;
                vol += a;
            }
        }
        acc * (1.0 / vol)
    }

    fn compute_gyration_sq(&self) -> f64 {
        let c = self.centroid();
        let mut moment = 0.0;
        let mut vol = 0.0;
        for s in &self.slices {
            let h = s.z_hi - s.z_lo;
            for p in &s.footprint {
                moment += p.translated(-c).polar_moment_origin() * h;
                vol += p.area() * h;
            }
        }
        moment / vol
    }

    /// Planar radius of gyration about the centroid.
    pub fn gyration_radius(&self) -> f64 {
        self.gyration_sq.sqrt()
    }

    pub fn gyration_sq(&self) -> f64 {
        self.gyration_sq
    }

    /// Copy with every footprint translated so the centroid sits at the origin.
    pub fn recentered(&self) -> Result<ObjectShape, WorldError> {
        let c = self.centroid();
        let slices = self
            .slices
            .iter()
            .map(|s| Slice {
                z_lo: s.z_lo,
                z_hi: s.z_hi,
                footprint: s.footprint.iter().map(|p| p.translated(-c)).collect(),
            })
            .collect();
        ObjectShape::new(self.label.clone(), slices)
    }

    /// Largest footprint area over slices.
    pub fn max_slice_area(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.footprint.iter().map(|p| p.area()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub fn normalize_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn isometry(&self) -> Isometry2 {
        Isometry2 {
            translation: self.position(),
            theta: self.theta,
        }
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotated(-self.theta)
    }

    pub fn rotate_to_world(&self, v: Vec2) -> Vec2 {
        v.rotated(self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub shape: ObjectShape,
    pub pose: Pose,
    pub mass: f64,
    pub friction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "initial_pose")]
    initial: Option<Pose>,
}

impl BodyState {
    /// Shapes are expected to be centred; `pose` then places the centroid.
    pub fn new(shape: ObjectShape, pose: Pose, mass: f64, friction: f64) -> Result<Self, WorldError> {
        if !(mass > 0.0) {
            return Err(WorldError::InvalidBody(format!("mass {mass} must be positive")));
        }
        if !(friction > 0.0) {
            return Err(WorldError::InvalidBody(format!("friction {friction} must be positive")));
        }
        Ok(BodyState {
            shape,
            pose,
            mass,
            friction,
            initial: Some(pose),
        })
    }

    pub fn initial_pose(&self) -> Pose {
        self.initial.unwrap_or(self.pose)
    }

    /// Resets the displacement reference to the current pose.
    pub fn mark_initial(&mut self) {
        self.initial = Some(self.pose);
    }

    pub fn centroid(&self) -> Vec2 {
        self.pose.isometry().apply(self.shape.centroid())
    }

    pub fn initial_centroid(&self) -> Vec2 {
        self.initial_pose().isometry().apply(self.shape.centroid())
    }

    pub fn world_footprint(&self, slice: usize) -> Vec<ConvexPolygon> {
        let iso = self.pose.isometry();
        self.shape.slices[slice]
            .footprint
            .iter()
            .map(|p| p.transformed(&iso))
            .collect()
    }

    /// Union of every slice's world footprint.
    pub fn all_world_pieces(&self) -> Vec<(f64, f64, ConvexPolygon)> {
        let iso = self.pose.isometry();
        self.shape
            .slices
            .iter()
            .flat_map(|s| s.footprint.iter().map(move |p| (s.z_lo, s.z_hi, p.transformed(&iso))))
            .collect()
    }

    pub fn world_bounds(&self) -> (Vec2, Vec2) {
        world_bounds_at(&self.shape, &self.pose)
    }

    /// Deepest overlap of a fingertip sphere with any slice piece, in world coordinates.
    pub fn sphere_penetration(&self, center: Vec3, radius: f64) -> Option<SpherePenetration> {
        if center.z - radius >= self.shape.height() {
            return None;
        }
        let local = Vec3::from_xy(self.pose.to_local(center.xy()), center.z);
        let mut best: Option<SpherePenetration> = None;
        for s in &self.shape.slices {
            if center.z - radius >= s.z_hi || center.z + radius <= s.z_lo {
                continue;
            }
            for p in &s.footprint {
                if let Some(pen) = sphere_prism_penetration(local, radius, p, s.z_lo, s.z_hi) {
                    if best.is_none_or(|b| pen.depth > b.depth) {
                        best = Some(pen);
                    }
                }
            }
        }
        best.map(|b| {
            let n = self.pose.rotate_to_world(b.normal.xy());
            let sp = self.pose.isometry().apply(b.surface_point.xy());
            SpherePenetration {
                depth: b.depth,
                normal: Vec3::new(n.x, n.y, b.normal.z),
                surface_point: Vec3::from_xy(sp, b.surface_point.z),
            }
        })
    }
}

pub(crate) fn world_bounds_at(shape: &ObjectShape, pose: &Pose) -> (Vec2, Vec2) {
    let iso = pose.isometry();
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in &shape.slices {
        for p in &s.footprint {
            for v in p.vertices() {
                let w = iso.apply(*v);
                lo.x = lo.x.min(w.x);
                lo.y = lo.y.min(w.y);
                hi.x = hi.x.max(w.x);
                hi.y = hi.y.max(w.y);
            }
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bin_side: f64,
    pub bodies: Vec<BodyState>,
    pub static_mode: bool,
    #[serde(skip)]
    pub physics: PhysicsParams,
    #[serde(skip)]
    pub tick: u64,
}

impl Scene {
    pub fn new(bin_side: f64, bodies: Vec<BodyState>, static_mode: bool) -> Self {
        Scene {
            bin_side,
            bodies,
            static_mode,
            physics: PhysicsParams::default(),
            tick: 0,
        }
    }

    pub fn empty(bin_side: f64) -> Self {
        Scene::new(bin_side, Vec::new(), false)
    }

    pub fn to_json(&self) -> Result<String, WorldError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Scene, WorldError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn contains_xy(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.bin_side && p.y <= self.bin_side
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        self.contains_xy(p.xy()) && p.z >= 0.0 && p.z <= BIN_HEIGHT
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.bodies.iter().map(|b| b.pose).collect()
    }

    pub fn restore_poses(&mut self, poses: &[Pose]) {
        for (b, p) in self.bodies.iter_mut().zip(poses) {
            b.pose = *p;
        }
    }

    pub fn true_centers(&self) -> Vec<Vec2> {
        self.bodies.iter().map(|b| b.centroid()).collect()
    }

    pub fn push_params(&self) -> PushParams {
        PushParams {
            kappa: self.physics.kappa,
            bin_side: self.bin_side,
        }
    }

    /// Deepest fingertip overlap over all bodies; ties go to the lower index.
    pub fn max_penetration(&self, center: Vec3) -> Option<(usize, SpherePenetration)> {
        let r = self.physics.finger_radius;
        let mut best: Option<(usize, SpherePenetration)> = None;
        for (i, b) in self.bodies.iter().enumerate() {
            if let Some(p) = b.sphere_penetration(center, r) {
                if best.is_none_or(|(_, q)| p.depth > q.depth) {
                    best = Some((i, p));
                }
            }
        }
        best
    }

    /// Per-body planar centroid displacement from the initial pose.
    pub fn displacement_report(&self) -> Vec<(usize, f64)> {
        self.bodies
            .iter()
            .enumerate()
            .map(|(i, b)| (i, b.centroid().distance(b.initial_centroid())))
            .collect()
    }

    pub fn mean_displacement(&self) -> f64 {
        if self.bodies.is_empty() {
            return 0.0;
        }
        self.displacement_report().iter().map(|(_, d)| d).sum::<f64>() / self.bodies.len() as f64
    }

    /// Index of the body whose footprint is closest to `p` (planar), with the distance.
    pub fn nearest_body(&self, p: Vec2) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in self.bodies.iter().enumerate() {
            let local = b.pose.to_local(p);
            let d = b
                .shape
                .slices
                .iter()
                .flat_map(|s| s.footprint.iter())
                .map(|poly| poly.signed_distance(local).max(0.0))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    /// Minimum planar gap between footprints of two bodies.
    pub fn body_gap(&self, a: usize, b: usize) -> f64 {
        let pa = self.bodies[a].all_world_pieces();
        let pb = self.bodies[b].all_world_pieces();
        let mut d = f64::INFINITY;
        for (_, _, p) in &pa {
            for (_, _, q) in &pb {
                d = d.min(p.distance_to(q));
            }
        }
        d
    }

    /// Applies a quasi-static push to body `idx` and resolves any body-body overlap it causes.
    pub fn push_body(&mut self, idx: usize, contact: Vec2, depth: f64, direction: Vec2) {
        if self.static_mode || depth <= 0.0 {
            return;
        }
        let params = self.push_params();
        self.bodies[idx].pose = push_response(&self.bodies[idx], contact, depth, direction, &params);
        physics::resolve_body_overlaps(self, idx);
    }
}

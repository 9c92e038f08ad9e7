//! Quasi-static push model.
//!
//! A push of depth `d` along unit direction `n` moves a body by `β d n` and
//! rotates it by `β d (r × n) / (|r|² + ρ²)`, where `β = 1 / (1 + κ μ m)`,
//! `r` is the lever arm from the centroid and `ρ` the footprint radius of gyration.

use super::{world_bounds_at, BodyState, Pose, Scene};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushParams {
    pub kappa: f64,
    pub bin_side: f64,
}

impl Default for PushParams {
    fn default() -> Self {
        PushParams {
            kappa: 10.0,
            bin_side: super::DEFAULT_BIN_SIDE,
        }
    }
}

/// Fraction of a penetration that is converted into body motion.
pub fn mobility(kappa: f64, friction: f64, mass: f64) -> f64 {
    1.0 / (1.0 + kappa * friction * mass)
}

/// New pose of `body` after a push of depth `depth` along `direction` applied at `contact`.
/// The result is clamped so the footprint stays inside the bin.
pub fn push_response(
    body: &BodyState,
    contact: Vec2,
    depth: f64,
    direction: Vec2,
    params: &PushParams,
) -> Pose {
    if depth <= 0.0 {
        return body.pose;
    }
    let beta = mobility(params.kappa, body.friction, body.mass);
    let n = direction.normalized();
    let r = contact - body.centroid();
    let dt = n * (beta * depth);
    let dtheta = beta * depth * r.cross(n) / (r.norm_sq() + body.shape.gyration_sq());
    // rotation is about the centroid, which for centred shapes is the pose origin
    let c = body.centroid();
    let origin = body.pose.position();
    let new_origin = c + (origin - c).rotated(dtheta) + dt;
    let pose = Pose::new(new_origin.x, new_origin.y, body.pose.theta + dtheta);
    clamp_into_bin(body, pose, params.bin_side)
}

pub(crate) fn clamp_into_bin(body: &BodyState, pose: Pose, bin_side: f64) -> Pose {
    let (lo, hi) = world_bounds_at(&body.shape, &pose);
    let mut shift = Vec2::ZERO;
    if lo.x < 0.0 {
        shift.x = -lo.x;
    } else if hi.x > bin_side {
        shift.x = bin_side - hi.x;
    }
    if lo.y < 0.0 {
        shift.y = -lo.y;
    } else if hi.y > bin_side {
        shift.y = bin_side - hi.y;
    }
    Pose {
        x: pose.x + shift.x,
        y: pose.y + shift.y,
        theta: pose.theta,
    }
}

const MAX_RESOLUTION_ROUNDS: usize = 48;

#[derive(Debug, Clone, Copy)]
struct BodyContact {
    depth: f64,
    normal: Vec2,
    point: Vec2,
}

/// Deepest footprint overlap between bodies `a` and `b` among z-overlapping slices.
/// Normal points from `a` toward `b`.
fn body_overlap(a: &BodyState, b: &BodyState) -> Option<BodyContact> {
    let (alo, ahi) = a.world_bounds();
    let (blo, bhi) = b.world_bounds();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return None;
    }
    let pa = a.all_world_pieces();
    let pb = b.all_world_pieces();
    let mut best: Option<BodyContact> = None;
    for (alo_z, ahi_z, p) in &pa {
        for (blo_z, bhi_z, q) in &pb {
            if alo_z >= bhi_z || blo_z >= ahi_z {
                continue;
            }
            if let Some(o) = p.overlap(q) {
                if best.is_none_or(|c| o.depth > c.depth) {
                    best = Some(BodyContact {
                        depth: o.depth,
                        normal: o.normal,
                        point: o.contact,
                    });
                }
            }
        }
    }
    best
}

/// Pushes bodies out of `moved` with the same quasi-static rule until overlaps fall
/// under the surface tolerance. Whatever cannot be resolved (a body pinned against
/// the wall) is taken back from the body that caused it.
pub(crate) fn resolve_body_overlaps(scene: &mut Scene, moved: usize) {
    let tol = scene.physics.surface_tolerance;
    let params = scene.push_params();
    let mut active = vec![moved];
    for _ in 0..MAX_RESOLUTION_ROUNDS {
        let mut next = Vec::new();
        for &a in &active {
            for b in 0..scene.bodies.len() {
                if b == a {
                    continue;
                }
                if let Some(c) = body_overlap(&scene.bodies[a], &scene.bodies[b]) {
                    if c.depth <= tol {
                        continue;
                    }
                    let before = scene.bodies[b].pose;
                    scene.bodies[b].pose =
                        push_response(&scene.bodies[b], c.point, c.depth, c.normal, &params);
                    if scene.bodies[b].pose != before && !next.contains(&b) {
                        next.push(b);
                    }
                    if !next.contains(&a) {
                        next.push(a);
                    }
                }
            }
        }
        if next.is_empty() {
            return;
        }
        active = next;
    }
    // residual overlap: back the pusher off along the contact normal
    for b in 0..scene.bodies.len() {
        if b == moved {
            continue;
        }
        if let Some(c) = body_overlap(&scene.bodies[moved], &scene.bodies[b]) {
            if c.depth > tol {
                let p = scene.bodies[moved].pose;
                let back = c.normal * (-c.depth);
                let pose = Pose::new(p.x + back.x, p.y + back.y, p.theta);
                scene.bodies[moved].pose = clamp_into_bin(&scene.bodies[moved], pose, params.bin_side);
            }
        }
    }
}

use super::DatasetError;
use crate::rng::rng_for;
use crate::world::{BodyState, ObjectShape, Pose, Scene, DEFAULT_FRICTION, DEFAULT_MASS};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// A single body gets this many tries before the whole layout is restarted.
const TRIES_PER_BODY: usize = 200;
const SCENE_STREAM: u64 = 0x7363;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub bin_side: f64,
    pub min_sep: f64,
    pub wall_clearance: f64,
    pub mass: f64,
    pub friction: f64,
    pub static_mode: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            bin_side: crate::world::DEFAULT_BIN_SIDE,
            min_sep: 4.0,
            wall_clearance: 2.0,
            mass: DEFAULT_MASS,
            friction: DEFAULT_FRICTION,
            static_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    /// Index into the input shape list for every body, in body order.
    pub chosen: Vec<usize>,
}

fn extent(shape: &ObjectShape) -> f64 {
    shape
        .slices()
        .iter()
        .flat_map(|s| s.footprint.iter().flat_map(|p| p.vertices().iter()))
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

/// Draws `k` distinct shapes and rejection-samples uniform poses until every body
/// clears the walls and every pair of footprints is at least `min_sep` apart.
pub fn gen_scene(shapes: &[ObjectShape], k: usize, params: &SceneParams, seed: u64) -> Result<GeneratedScene, DatasetError> {
    if k == 0 || k > shapes.len() {
        return Err(DatasetError::TooFewShapes { k, available: shapes.len() });
    }
    let mut rng = rng_for(seed, &[SCENE_STREAM]);
    let chosen = sample(&mut rng, shapes.len(), k).into_vec();
    let side = params.bin_side;
    let wall = params.wall_clearance;
    let mut attempts = 0;
    'layout: loop {
        let mut scene = Scene::new(side, Vec::new(), params.static_mode);
        for &si in &chosen {
            let shape = &shapes[si];
            let r = extent(shape);
            let (lo, hi) = (wall, side - wall);
            let mut placed = false;
            for _ in 0..TRIES_PER_BODY {
                attempts += 1;
                if attempts > MAX_PLACEMENT_ATTEMPTS {
                    return Err(DatasetError::Crowded(MAX_PLACEMENT_ATTEMPTS));
                }
                let theta = rng.gen_range(-PI..PI);
                let span = (lo + r, hi - r);
                let (x, y) = if span.0 < span.1 {
                    (rng.gen_range(span.0..span.1), rng.gen_range(span.0..span.1))
                } else {
                    (side / 2.0, side / 2.0)
                };
                let body = BodyState::new(shape.clone(), Pose::new(x, y, theta), params.mass, params.friction)?;
                let (blo, bhi) = body.world_bounds();
                if blo.x < lo || blo.y < lo || bhi.x > hi || bhi.y > hi {
                    continue;
                }
                scene.bodies.push(body);
                let idx = scene.bodies.len() - 1;
                if (0..idx).all(|j| scene.body_gap(idx, j) >= params.min_sep) {
                    placed = true;
                    break;
                }
                scene.bodies.pop();
            }
            if !placed {
                continue 'layout;
            }
        }
        return Ok(GeneratedScene { scene, chosen });
    }
}

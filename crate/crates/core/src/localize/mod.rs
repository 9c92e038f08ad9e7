//! Object localization from vertical probing.
//!
//! Every cell of a square grid is probed once from above in raster order. The
//! cluster method runs k-means on the occupied cell centres; the particle-filter
//! baseline consumes the same probe outcomes with a disc measurement model.

mod kmeans;
mod matching;
mod pf;
mod render;

pub use kmeans::{kmeans, KMeansResult, DEFAULT_MAX_ITER};
pub use matching::{match_centers, MatchResult, MAX_EXHAUSTIVE};
pub use pf::{localize_pf, localize_pf_from_grid, ParticleSet, PfConfig};
pub use render::render_svg;

use crate::geometry::Vec2;
use crate::rng::rng_for;
use crate::world::{probe_descend, ContactTarget, ProbeConfig, Scene, WorldError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CELL: f64 = 5.0;
pub const SUCCESS_THRESHOLD: f64 = 7.5;

const KMEANS_STREAM: u64 = 0x6b6d;

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error("cell size {0} outside [2, 10] cm")]
    BadCell(f64),
    #[error("invalid cluster count {0}")]
    InvalidK(usize),
    #[error("only {found} occupied cells for {expected} objects")]
    UnderDetected { found: usize, expected: usize },
    #[error("cannot match {pred} predictions against {truth} true centres")]
    SizeMismatch { pred: usize, truth: usize },
    #[error("particle count {0} below 100")]
    TooFewParticles(usize),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Binary occupancy map. Cell `(i, j)` is row `i` (y) and column `j` (x), stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub delta: f64,
    pub origin: Vec2,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(bin_side: f64, delta: f64) -> Result<Self, LocalizeError> {
        if !(2.0..=10.0).contains(&delta) {
            return Err(LocalizeError::BadCell(delta));
        }
        let n = (bin_side / delta - 1e-9).ceil().max(1.0) as usize;
        Ok(OccupancyGrid {
            delta,
            origin: Vec2::ZERO,
            rows: n,
            cols: n,
            cells: vec![false; n * n],
        })
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new((j as f64 + 0.5) * self.delta, (i as f64 + 0.5) * self.delta)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.cells[i * self.cols + j] = v;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Centres of occupied cells in raster order.
    pub fn occupied_centers(&self) -> Vec<Vec2> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) {
                    out.push(self.cell_center(i, j));
                }
            }
        }
        out
    }

    /// One text line per row, highest y first; `#` marks an occupied cell.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.cols + 1) * self.rows);
        for i in (0..self.rows).rev() {
            for j in 0..self.cols {
                s.push(if self.get(i, j) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Probes the centre of every cell in raster order; a cell is occupied when the
/// descent stops on a body rather than the floor.
pub fn build_occupancy(scene: &mut Scene, delta: f64, probe: &ProbeConfig) -> Result<OccupancyGrid, LocalizeError> {
    let mut grid = OccupancyGrid::new(scene.bin_side, delta)?;
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            let c = grid.cell_center(i, j);
            let at = Vec2::new(c.x.min(scene.bin_side), c.y.min(scene.bin_side));
            let ev = probe_descend(scene, at, probe)?;
            grid.set(i, j, matches!(ev.target, ContactTarget::Body(_)));
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterEstimate {
    pub centers: Vec<Vec2>,
    /// Indices into the occupied-cell list for each centre.
    pub members: Vec<Vec<usize>>,
}

impl CenterEstimate {
    /// Assigns every occupied cell to its nearest centre.
    pub fn from_centers(centers: Vec<Vec2>, occupied: &[Vec2]) -> Self {
        let mut members = vec![Vec::new(); centers.len()];
        if !centers.is_empty() {
            for (idx, p) in occupied.iter().enumerate() {
                let best = centers
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, p.distance(*c)))
                    .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
                members[best.0].push(idx);
            }
        }
        CenterEstimate { centers, members }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub estimate: CenterEstimate,
    pub success: bool,
    pub center_error: f64,
    pub perturbation: f64,
    pub probes_used: usize,
    /// Body centroids after probing, the reference for success.
    pub truth: Vec<Vec2>,
    pub grid: OccupancyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeConfig {
    pub delta: f64,
    pub threshold: f64,
    pub max_iter: usize,
    pub probe: ProbeConfig,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            delta: DEFAULT_CELL,
            threshold: SUCCESS_THRESHOLD,
            max_iter: DEFAULT_MAX_ITER,
            probe: ProbeConfig::default(),
        }
    }
}

pub(crate) fn finish(
    scene: &Scene,
    grid: OccupancyGrid,
    centers: Vec<Vec2>,
    forced_failure: bool,
    threshold: f64,
) -> Result<LocalizationResult, LocalizeError> {
    let truth = scene.true_centers();
    let occupied = grid.occupied_centers();
    let m = match_centers(&centers, &truth, threshold)?;
    Ok(LocalizationResult {
        estimate: CenterEstimate::from_centers(centers, &occupied),
        success: m.success && !forced_failure,
        center_error: m.mean_error,
        perturbation: scene.mean_displacement(),
        probes_used: grid.rows * grid.cols,
        truth,
        grid,
    })
}

/// Occupancy grid followed by k-means with a known object count.
///
/// Fewer occupied cells than objects is reported as a failed localization; the
/// missing centres are filled with the bin centre so the error stays defined.
pub fn localize_cluster(
    scene: &mut Scene,
    k: usize,
    cfg: &LocalizeConfig,
    seed: u64,
) -> Result<LocalizationResult, LocalizeError> {
    if k == 0 || k != scene.bodies.len() {
        return Err(LocalizeError::InvalidK(k));
    }
    let grid = build_occupancy(scene, cfg.delta, &cfg.probe)?;
    let points = grid.occupied_centers();
    let mut rng = rng_for(seed, &[KMEANS_STREAM]);
    match kmeans(&points, k, &mut rng, cfg.max_iter) {
        Ok(r) => finish(scene, grid, r.centers, false, cfg.threshold),
        Err(LocalizeError::UnderDetected { .. }) => {
            let mut centers = points.clone();
            let mid = Vec2::new(0.5 * scene.bin_side, 0.5 * scene.bin_side);
            centers.resize(k, mid);
            finish(scene, grid, centers, true, cfg.threshold)
        }
        Err(e) => Err(e),
    }
}

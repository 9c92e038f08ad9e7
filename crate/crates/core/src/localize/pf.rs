//! Joint-hypothesis particle filter over all object centres.

use super::{build_occupancy, finish, LocalizationResult, LocalizeConfig, LocalizeError, OccupancyGrid};
use crate::geometry::Vec2;
use crate::rng::rng_for;
use crate::world::Scene;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const PF_STREAM: u64 = 0x7066;
const INIT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    pub n_particles: usize,
    /// Every hypothesised object is a disc of this radius.
    pub disc_radius: f64,
    /// Probability of a false positive and of a false negative probe outcome.
    pub flip_rate: f64,
    pub diffusion: f64,
    pub min_separation: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        PfConfig {
            n_particles: 2000,
            disc_radius: 6.0,
            flip_rate: 0.05,
            diffusion: 0.5,
            min_separation: 2.0,
        }
    }
}

/// `n` hypotheses of `k` centres each, stored flat as `[x0, y0, x1, y1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub k: usize,
    pub hypotheses: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn uniform<R: Rng + ?Sized>(n: usize, k: usize, side: f64, min_sep: f64, rng: &mut R) -> Self {
        let mut hypotheses = Vec::with_capacity(n * 2 * k);
        let mut centers: Vec<Vec2> = Vec::with_capacity(k);
        for _ in 0..n {
            centers.clear();
            while centers.len() < k {
                let mut c = Vec2::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side);
                for _ in 0..INIT_ATTEMPTS {
                    if centers.iter().all(|o| o.distance(c) >= min_sep) {
                        break;
                    }
                    c = Vec2::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side);
                }
                centers.push(c);
            }
            for c in &centers {
                hypotheses.push(c.x);
                hypotheses.push(c.y);
            }
        }
        ParticleSet {
            k,
            hypotheses,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn center(&self, p: usize, j: usize) -> Vec2 {
        let o = (p * self.k + j) * 2;
        Vec2::new(self.hypotheses[o], self.hypotheses[o + 1])
    }

    fn particle(&self, p: usize) -> &[f64] {
        &self.hypotheses[p * 2 * self.k..(p + 1) * 2 * self.k]
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Rescales weights to sum to one; a collapsed set (all zero) becomes uniform.
    pub fn normalize(&mut self) {
        let s: f64 = self.weights.iter().sum();
        let n = self.weights.len() as f64;
        if s > 0.0 && s.is_finite() {
            self.weights.iter_mut().for_each(|w| *w /= s);
        } else {
            self.weights.iter_mut().for_each(|w| *w = 1.0 / n);
        }
    }

    /// Multiplies each weight by the probability of the observed probe outcome.
    pub fn observe(&mut self, at: Vec2, contact: bool, cfg: &PfConfig) {
        let r2 = cfg.disc_radius * cfg.disc_radius;
        for p in 0..self.len() {
            let inside = (0..self.k).any(|j| (self.center(p, j) - at).norm_sq() <= r2);
            let lik = if inside == contact { 1.0 - cfg.flip_rate } else { cfg.flip_rate };
            self.weights[p] *= lik;
        }
        self.normalize();
    }

    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.len();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        let width = 2 * self.k;
        let mut next = Vec::with_capacity(self.hypotheses.len());
        for _ in 0..n {
            let u = rng.gen::<f64>() * acc;
            let idx = cdf.partition_point(|c| *c <= u).min(n - 1);
            next.extend_from_slice(&self.hypotheses[idx * width..(idx + 1) * width]);
        }
        self.hypotheses = next;
        self.weights = vec![1.0 / n as f64; n];
    }

    pub fn diffuse<R: Rng + ?Sized>(&mut self, sigma: f64, side: f64, rng: &mut R) {
        if sigma <= 0.0 {
            return;
        }
        let noise = Normal::new(0.0, sigma).expect("positive sigma");
        for v in self.hypotheses.iter_mut() {
            *v = (*v + noise.sample(rng)).clamp(0.0, side);
        }
    }

    /// Weighted mean hypothesis. Object labels are arbitrary within a particle, so
    /// each particle is first permuted onto the heaviest particle before averaging.
    pub fn weighted_mean(&self) -> Vec<Vec2> {
        let k = self.k;
        let best = (0..self.len())
            .fold(0, |b, p| if self.weights[p] > self.weights[b] { p } else { b });
        let reference: Vec<Vec2> = (0..k).map(|j| self.center(best, j)).collect();
        let perms = permutations(k);
        let mut mean = vec![Vec2::ZERO; k];
        for p in 0..self.len() {
            let h = self.particle(p);
            let c = |j: usize| Vec2::new(h[2 * j], h[2 * j + 1]);
            let perm = perms
                .iter()
                .map(|perm| {
                    let cost: f64 = perm.iter().enumerate().map(|(slot, &j)| (c(j) - reference[slot]).norm_sq()).sum();
                    (perm, cost)
                })
                .fold((&perms[0], f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
                .0;
            for (slot, &j) in perm.iter().enumerate() {
                mean[slot] += c(j) * self.weights[p];
            }
        }
        mean
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Runs the filter over the probe outcomes of `grid` in raster order.
pub fn localize_pf_from_grid(grid: &OccupancyGrid, side: f64, k: usize, cfg: &PfConfig, seed: u64) -> Result<ParticleSet, LocalizeError> {
    if cfg.n_particles < 100 {
        return Err(LocalizeError::TooFewParticles(cfg.n_particles));
    }
    if k == 0 || k > super::MAX_EXHAUSTIVE {
        return Err(LocalizeError::InvalidK(k));
    }
    let mut rng = rng_for(seed, &[PF_STREAM]);
    let mut set = ParticleSet::uniform(cfg.n_particles, k, side, cfg.min_separation, &mut rng);
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            set.observe(grid.cell_center(i, j), grid.get(i, j), cfg);
            if set.effective_sample_size() < 0.5 * set.len() as f64 {
                set.resample(&mut rng);
            }
            set.diffuse(cfg.diffusion, side, &mut rng);
        }
    }
    Ok(set)
}

/// Particle-filter localization with the same raster probe sequence as the cluster method.
pub fn localize_pf(
    scene: &mut Scene,
    k: usize,
    pf: &PfConfig,
    cfg: &LocalizeConfig,
    seed: u64,
) -> Result<LocalizationResult, LocalizeError> {
    if k == 0 || k != scene.bodies.len() {
        return Err(LocalizeError::InvalidK(k));
    }
    if pf.n_particles < 100 {
        return Err(LocalizeError::TooFewParticles(pf.n_particles));
    }
    let grid = build_occupancy(scene, cfg.delta, &cfg.probe)?;
    let set = localize_pf_from_grid(&grid, scene.bin_side, k, pf, seed)?;
    let centers = set.weighted_mean();
    finish(scene, grid, centers, false, cfg.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutations_are_complete() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn weights_stay_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PfConfig::default();
        let mut s = ParticleSet::uniform(500, 2, 60.0, 2.0, &mut rng);
        for t in 0..40 {
            s.observe(Vec2::new(t as f64, 30.0), t % 3 == 0, &cfg);
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if s.effective_sample_size() < 250.0 {
                s.resample(&mut rng);
            }
            s.diffuse(0.5, 60.0, &mut rng);
        }
    }

    #[test]
    fn init_respects_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ParticleSet::uniform(300, 3, 60.0, 2.0, &mut rng);
        for p in 0..s.len() {
            for a in 0..3 {
                for b in a + 1..3 {
                    assert!(s.center(p, a).distance(s.center(p, b)) >= 2.0);
                }
            }
        }
    }

    #[test]
    fn mean_is_label_invariant() {
        let mut s = ParticleSet {
            k: 2,
            hypotheses: vec![10.0, 10.0, 50.0, 50.0, 50.0, 50.0, 10.0, 10.0],
            weights: vec![0.6, 0.4],
        };
        s.normalize();
        let m = s.weighted_mean();
        assert!((m[0] - Vec2::new(10.0, 10.0)).norm() < 1e-12);
        assert!((m[1] - Vec2::new(50.0, 50.0)).norm() < 1e-12);
    }
}

//! Lloyd's k-means with k-means++ seeding.

use super::LocalizeError;
use crate::geometry::Vec2;
use rand::Rng;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec2>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances after every assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

fn nearest(p: Vec2, centers: &[Vec2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = (p - *c).norm_sq();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_seed<R: Rng + ?Sized>(points: &[Vec2], k: usize, rng: &mut R) -> Vec<Vec2> {
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (*p - centers[0]).norm_sq()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            // all remaining points coincide with a centre
            rng.gen_range(0..points.len())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        };
        let c = points[idx];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((*p - c).norm_sq());
        }
    }
    centers
}

/// Clusters `points` into `k` groups.
///
/// Fails with [`LocalizeError::UnderDetected`] when there are fewer points than clusters.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec2],
    k: usize,
    rng: &mut R,
    max_iter: usize,
) -> Result<KMeansResult, LocalizeError> {
    if k == 0 {
        return Err(LocalizeError::InvalidK(0));
    }
    if points.len() < k {
        return Err(LocalizeError::UnderDetected {
            found: points.len(),
            expected: k,
        });
    }
    let mut centers = plus_plus_seed(points, k, rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, d) = nearest(*p, &centers);
            objective += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![Vec2::ZERO; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assignment.iter().zip(points) {
            sums[*a] += *p;
            counts[*a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] * (1.0 / counts[j] as f64);
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // reseed at the point farthest from its current centre
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, (*p - centers[assignment[i]]).norm_sq()))
                    .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b });
                centers[j] = points[far.0];
                assignment[far.0] = j;
                counts[j] = 1;
            }
        }
    }
    Ok(KMeansResult {
        centers,
        assignment,
        objective_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_symmetric_clusters() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 1.0),
        ];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = kmeans(&pts, 2, &mut rng, DEFAULT_MAX_ITER).unwrap();
            let mut c = r.centers.clone();
            c.sort_by(|a, b| a.x.total_cmp(&b.x));
            assert!((c[0] - Vec2::new(0.0, 0.5)).norm() < 1e-12);
            assert!((c[1] - Vec2::new(10.0, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn k1_is_centroid() {
        let pts = [Vec2::new(1.0, 2.0), Vec2::new(3.0, -2.0), Vec2::new(5.0, 6.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = kmeans(&pts, 1, &mut rng, DEFAULT_MAX_ITER).unwrap();
        assert!((r.centers[0] - Vec2::new(3.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn under_detection_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = kmeans(&[Vec2::ZERO], 2, &mut rng, 10).unwrap_err();
        assert!(matches!(e, LocalizeError::UnderDetected { found: 1, expected: 2 }));
    }

    #[test]
    fn duplicate_points_terminate() {
        let pts = vec![Vec2::new(1.0, 1.0); 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = kmeans(&pts, 3, &mut rng, 100).unwrap();
        assert_eq!(r.centers.len(), 3);
        assert!(r.objective_history.last().unwrap().abs() < 1e-12);
    }
}

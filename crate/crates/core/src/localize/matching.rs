use super::LocalizeError;
use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};

/// Largest set size matched by exhaustive permutation search.
pub const MAX_EXHAUSTIVE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub success: bool,
    pub mean_error: f64,
    /// `assignment[i]` is the truth index matched to prediction `i`.
    pub assignment: Vec<usize>,
    pub distances: Vec<f64>,
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Minimum-cost perfect matching between predicted and true centres on Euclidean
/// distance. Success requires every matched pair to lie strictly within `threshold`.
pub fn match_centers(pred: &[Vec2], truth: &[Vec2], threshold: f64) -> Result<MatchResult, LocalizeError> {
    if pred.len() != truth.len() {
        return Err(LocalizeError::SizeMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let k = pred.len();
    if k == 0 {
        return Ok(MatchResult {
            success: true,
            mean_error: 0.0,
            assignment: Vec::new(),
            distances: Vec::new(),
        });
    }
    if k > MAX_EXHAUSTIVE {
        return Err(LocalizeError::InvalidK(k));
    }
    let cost: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| truth.iter().map(|t| p.distance(*t)).collect())
        .collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < best.0 {
            best = (total, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let distances: Vec<f64> = best.1.iter().enumerate().map(|(i, &j)| cost[i][j]).collect();
    Ok(MatchResult {
        success: distances.iter().all(|&d| d < threshold),
        mean_error: best.0 / k as f64,
        assignment: best.1,
        distances,
    })
}

//! Contrastive objectives on L2-normalized embeddings.

use ndarray::{Array2, Axis};

/// InfoNCE over `2B` embeddings where rows `2i` and `2i + 1` form a positive pair.
/// Each row is an anchor scored against its partner and the other `2B - 2` rows.
/// Returns the mean loss and its gradient with respect to the embeddings.
pub fn info_nce(z: &Array2<f64>, tau: f64) -> (f64, Array2<f64>) {
    let m = z.nrows();
    let logits = z.dot(&z.t()) / tau;
    let mut dlogits = Array2::<f64>::zeros((m, m));
    let mut loss = 0.0;
    for i in 0..m {
        let pos = i ^ 1;
        let row = logits.row(i);
        let mx = (0..m).filter(|&j| j != i).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..m).filter(|&j| j != i).map(|j| (row[j] - mx).exp()).sum();
        let lse = mx + sum.ln();
        loss += lse - row[pos];
        for j in 0..m {
            if j != i {
                dlogits[[i, j]] = (row[j] - lse).exp() / m as f64;
            }
        }
        dlogits[[i, pos]] -= 1.0 / m as f64;
    }
    let sym = &dlogits + &dlogits.t();
    (loss / m as f64, sym.dot(z) / tau)
}

/// Mean hinge `max(0, margin - cos(a, p) + cos(a, n))` over `(a, p, n)` row triples.
pub fn triplet(z: &Array2<f64>, triples: &[(usize, usize, usize)], margin: f64) -> (f64, Array2<f64>) {
    let mut dz = Array2::<f64>::zeros(z.raw_dim());
    let mut loss = 0.0;
    let k = triples.len().max(1) as f64;
    for &(a, p, n) in triples {
        let (za, zp, zn) = (z.row(a), z.row(p), z.row(n));
        let v = margin - za.dot(&zp) + za.dot(&zn);
        if v > 0.0 {
            loss += v;
            let ga = (&zn - &zp) / k;
            let gp = &za * (-1.0 / k);
            let gn = &za / k;
            dz.index_axis_mut(Axis(0), a).scaled_add(1.0, &ga);
            dz.index_axis_mut(Axis(0), p).scaled_add(1.0, &gp);
            dz.index_axis_mut(Axis(0), n).scaled_add(1.0, &gn);
        }
    }
    (loss / k, dz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_n() {
        let z = Array2::from_shape_fn((8, 4), |(_, j)| if j == 0 { 1.0 } else { 0.0 });
        let (l, _) = info_nce(&z, 0.1);
        assert!((l - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separated_pairs_give_near_zero_loss() {
        // two orthogonal pairs, each pair identical
        let z = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let (l, _) = info_nce(&z, 0.01);
        assert!(l < 1e-30);
    }

    #[test]
    fn info_nce_gradient_matches_differences() {
        let z = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let (_, g) = info_nce(&z, 0.5);
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..3 {
                let mut zp = z.clone();
                zp[[i, j]] += h;
                let mut zm = z.clone();
                zm[[i, j]] -= h;
                let fd = (info_nce(&zp, 0.5).0 - info_nce(&zm, 0.5).0) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn triplet_limits() {
        let z = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 1.0, 0.0, -1.0, 0.0]).unwrap();
        assert_eq!(triplet(&z, &[(0, 1, 2)], 0.2).0, 0.0);
        let same = Array2::from_shape_vec((3, 2), vec![0.6, 0.8, 0.6, 0.8, 0.6, 0.8]).unwrap();
        assert!((triplet(&same, &[(0, 1, 2)], 0.2).0 - 0.2).abs() < 1e-12);
    }
}

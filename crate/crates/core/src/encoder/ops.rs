use ndarray::{Array1, Array2, ArrayView1, Axis};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv: Array1<f64>,
}

/// Row-wise layer normalization.
pub(crate) fn ln_forward(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.mean_axis(Axis(1)).expect("non-empty");
    let mut xhat = x - &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    xhat *= &inv.view().insert_axis(Axis(1));
    let y = &xhat * &g + b;
    (y, LnCache { xhat, inv })
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn ln_backward(dy: &Array2<f64>, c: &LnCache, g: ArrayView1<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dgain = (dy * &c.xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * &g;
    let m1 = dxhat.mean_axis(Axis(1)).expect("non-empty");
    let m2 = (&dxhat * &c.xhat).mean_axis(Axis(1)).expect("non-empty");
    let mut dx = dxhat - m1.view().insert_axis(Axis(1)) - &(&c.xhat * &m2.view().insert_axis(Axis(1)));
    dx *= &c.inv.view().insert_axis(Axis(1));
    (dx, dgain, dbias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut m = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 1000.0, 1000.0, -5.0]).unwrap();
        softmax_rows(&mut m);
        for r in m.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }
}

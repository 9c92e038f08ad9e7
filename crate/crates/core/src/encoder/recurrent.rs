//! Stacked LSTM encoder over point tokens.

use super::layout::{Init, LayoutBuilder, Slot};
use super::ops::sigmoid;
use ndarray::{s, Array1, Array2, Axis};

#[derive(Debug, Clone)]
struct LstmSlots {
    wx: Slot,
    wh: Slot,
    b: Slot,
}

#[derive(Debug, Clone)]
pub(crate) struct RecurrentNet {
    d: usize,
    w_in: Slot,
    b_in: Slot,
    layers: Vec<LstmSlots>,
}

struct LstmCache {
    input: Array2<f64>,
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

pub(crate) struct RecurrentCache {
    x: Array2<f64>,
    layers: Vec<LstmCache>,
    pub pooled: Array1<f64>,
}

impl RecurrentNet {
    pub fn build(lb: &mut LayoutBuilder, d: usize, n_layers: usize) -> Self {
        let w_in = lb.weight("lift.weight", 3, d);
        let b_in = lb.vec("lift.bias", d, Init::Const(0.0));
        let layers = (0..n_layers)
            .map(|l| LstmSlots {
                wx: lb.weight(format!("lstm{l}.input.weight"), d, 4 * d),
                wh: lb.weight(format!("lstm{l}.hidden.weight"), d, 4 * d),
                b: lb.vec(format!("lstm{l}.bias"), 4 * d, Init::ForgetBias(d)),
            })
            .collect();
        RecurrentNet { d, w_in, b_in, layers }
    }

    pub fn forward(&self, p: &[f64], x: &Array2<f64>) -> RecurrentCache {
        let n = x.nrows();
        let d = self.d;
        let mut input = x.dot(&self.w_in.mat(p)) + self.b_in.vec(p);
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let pre = input.dot(&l.wx.mat(p)) + l.b.vec(p);
            let wh = l.wh.mat(p);
            let mut gates = Array2::zeros((n, 4 * d));
            let mut c = Array2::zeros((n, d));
            let mut tanh_c = Array2::zeros((n, d));
            let mut h = Array2::zeros((n, d));
            let mut h_prev = Array1::<f64>::zeros(d);
            let mut c_prev = Array1::<f64>::zeros(d);
            for t in 0..n {
                let z = &pre.row(t) + &h_prev.dot(&wh);
                let mut gt = gates.row_mut(t);
                for j in 0..d {
                    let i = sigmoid(z[j]);
                    let f = sigmoid(z[d + j]);
                    let g = z[2 * d + j].tanh();
                    let o = sigmoid(z[3 * d + j]);
                    gt[j] = i;
                    gt[d + j] = f;
                    gt[2 * d + j] = g;
                    gt[3 * d + j] = o;
                    let ct = f * c_prev[j] + i * g;
                    let tc = ct.tanh();
                    c[[t, j]] = ct;
                    tanh_c[[t, j]] = tc;
                    h[[t, j]] = o * tc;
                }
                h_prev = h.row(t).to_owned();
                c_prev = c.row(t).to_owned();
            }
            let next = h.clone();
            caches.push(LstmCache {
                input,
                gates,
                c,
                tanh_c,
                h,
            });
            input = next;
        }
        let pooled = input.mean_axis(Axis(0)).expect("non-empty sequence");
        RecurrentCache {
            x: x.clone(),
            layers: caches,
            pooled,
        }
    }

    pub fn backward(&self, p: &[f64], c: &RecurrentCache, dpooled: &Array1<f64>, grad: &mut [f64]) {
        let n = c.x.nrows();
        let d = self.d;
        let mut dh_seq = Array2::from_shape_fn((n, d), |(_, j)| dpooled[j] / n as f64);
        for (l, lc) in self.layers.iter().zip(&c.layers).rev() {
            let wh = l.wh.mat(p);
            let mut dz = Array2::<f64>::zeros((n, 4 * d));
            let mut dh_next = Array1::<f64>::zeros(d);
            let mut dc_next = Array1::<f64>::zeros(d);
            for t in (0..n).rev() {
                let g = lc.gates.row(t);
                let mut dzt = dz.row_mut(t);
                for j in 0..d {
                    let (i, f, gg, o) = (g[j], g[d + j], g[2 * d + j], g[3 * d + j]);
                    let tc = lc.tanh_c[[t, j]];
                    let c_prev = if t > 0 { lc.c[[t - 1, j]] } else { 0.0 };
                    let dh = dh_seq[[t, j]] + dh_next[j];
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                    dzt[j] = dc * gg * i * (1.0 - i);
                    dzt[d + j] = dc * c_prev * f * (1.0 - f);
                    dzt[2 * d + j] = dc * i * (1.0 - gg * gg);
                    dzt[3 * d + j] = d_o * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                dh_next = wh.dot(&dz.row(t));
            }
            l.wx.acc(grad, lc.input.t().dot(&dz).iter());
            if n > 1 {
                let h_prev = lc.h.slice(s![..n - 1, ..]);
                let dz_tail = dz.slice(s![1.., ..]);
                l.wh.acc(grad, h_prev.t().dot(&dz_tail).iter());
            }
            l.b.acc(grad, dz.sum_axis(Axis(0)).iter());
            dh_seq = dz.dot(&l.wx.mat(p).t());
        }
        self.w_in.acc(grad, c.x.t().dot(&dh_seq).iter());
        self.b_in.acc(grad, dh_seq.sum_axis(Axis(0)).iter());
    }
}

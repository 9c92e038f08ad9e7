//! Pre-norm transformer encoder over point tokens, with hand-written backward pass.

use super::layout::{Init, LayoutBuilder, Slot};
use super::ops::{gelu, gelu_grad, ln_backward, ln_forward, softmax_rows, LnCache};
use ndarray::{s, Array1, Array2, Axis};

#[derive(Debug, Clone)]
struct LayerSlots {
    ln1_g: Slot,
    ln1_b: Slot,
    wq: Slot,
    bq: Slot,
    wk: Slot,
    bk: Slot,
    wv: Slot,
    bv: Slot,
    wo: Slot,
    bo: Slot,
    ln2_g: Slot,
    ln2_b: Slot,
    w1: Slot,
    b1: Slot,
    w2: Slot,
    b2: Slot,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionNet {
    d: usize,
    heads: usize,
    w_in: Slot,
    b_in: Slot,
    pos: Slot,
    layers: Vec<LayerSlots>,
    lnf_g: Slot,
    lnf_b: Slot,
    pub head_w: Slot,
    pub head_b: Slot,
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

pub(crate) struct AttentionCache {
    x: Array2<f64>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pub pooled: Array1<f64>,
}

impl AttentionNet {
    pub fn build(lb: &mut LayoutBuilder, d: usize, heads: usize, n_layers: usize, d_ff: usize, d_embed: usize, max_len: usize) -> Self {
        let w_in = lb.weight("lift.weight", 3, d);
        let b_in = lb.vec("lift.bias", d, Init::Const(0.0));
        let pos = lb.mat("position", max_len, d, Init::Uniform(0.1));
        let layers = (0..n_layers)
            .map(|l| LayerSlots {
                ln1_g: lb.vec(format!("layer{l}.ln1.gain"), d, Init::Const(1.0)),
                ln1_b: lb.vec(format!("layer{l}.ln1.bias"), d, Init::Const(0.0)),
                wq: lb.weight(format!("layer{l}.attn.q.weight"), d, d),
                bq: lb.vec(format!("layer{l}.attn.q.bias"), d, Init::Const(0.0)),
                wk: lb.weight(format!("layer{l}.attn.k.weight"), d, d),
                bk: lb.vec(format!("layer{l}.attn.k.bias"), d, Init::Const(0.0)),
                wv: lb.weight(format!("layer{l}.attn.v.weight"), d, d),
                bv: lb.vec(format!("layer{l}.attn.v.bias"), d, Init::Const(0.0)),
                wo: lb.weight(format!("layer{l}.attn.out.weight"), d, d),
                bo: lb.vec(format!("layer{l}.attn.out.bias"), d, Init::Const(0.0)),
                ln2_g: lb.vec(format!("layer{l}.ln2.gain"), d, Init::Const(1.0)),
                ln2_b: lb.vec(format!("layer{l}.ln2.bias"), d, Init::Const(0.0)),
                w1: lb.weight(format!("layer{l}.ff.in.weight"), d, d_ff),
                b1: lb.vec(format!("layer{l}.ff.in.bias"), d_ff, Init::Const(0.0)),
                w2: lb.weight(format!("layer{l}.ff.out.weight"), d_ff, d),
                b2: lb.vec(format!("layer{l}.ff.out.bias"), d, Init::Const(0.0)),
            })
            .collect();
        let lnf_g = lb.vec("final_ln.gain", d, Init::Const(1.0));
        let lnf_b = lb.vec("final_ln.bias", d, Init::Const(0.0));
        let head_w = lb.weight("head.weight", d, d_embed);
        let head_b = lb.vec("head.bias", d_embed, Init::Const(0.0));
        AttentionNet {
            d,
            heads,
            w_in,
            b_in,
            pos,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
        }
    }

    /// Mean-pooled token features for an `L × 3` token matrix.
    pub fn forward(&self, p: &[f64], x: &Array2<f64>) -> AttentionCache {
        let n = x.nrows();
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut h = x.dot(&self.w_in.mat(p)) + self.b_in.vec(p) + self.pos.mat(p).slice(s![..n, ..]);
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (a, ln1) = ln_forward(&h, l.ln1_g.vec(p), l.ln1_b.vec(p));
            let q = a.dot(&l.wq.mat(p)) + l.bq.vec(p);
            let k = a.dot(&l.wk.mat(p)) + l.bk.vec(p);
            let v = a.dot(&l.wv.mat(p)) + l.bv.vec(p);
            let mut o = Array2::zeros((n, self.d));
            let mut probs = Vec::with_capacity(self.heads);
            for hd in 0..self.heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let qh = q.slice(cols);
                let kh = k.slice(cols);
                let mut sc = qh.dot(&kh.t()) * scale;
                softmax_rows(&mut sc);
                o.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
                probs.push(sc);
            }
            h = h + o.dot(&l.wo.mat(p)) + l.bo.vec(p);
            let (b, ln2) = ln_forward(&h, l.ln2_g.vec(p), l.ln2_b.vec(p));
            let u = b.dot(&l.w1.mat(p)) + l.b1.vec(p);
            let g = u.mapv(gelu);
            h = h + g.dot(&l.w2.mat(p)) + l.b2.vec(p);
            caches.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                b,
                u,
                g,
            });
        }
        let (f, lnf) = ln_forward(&h, self.lnf_g.vec(p), self.lnf_b.vec(p));
        let pooled = f.mean_axis(Axis(0)).expect("non-empty sequence");
        AttentionCache {
            x: x.clone(),
            layers: caches,
            lnf,
            pooled,
        }
    }

    /// Accumulates parameter gradients given the gradient of the pooled features.
    pub fn backward(&self, p: &[f64], c: &AttentionCache, dpooled: &Array1<f64>, grad: &mut [f64]) {
        let n = c.x.nrows();
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let df = Array2::from_shape_fn((n, self.d), |(_, j)| dpooled[j] / n as f64);
        let (mut dhid, dg, db) = ln_backward(&df, &c.lnf, self.lnf_g.vec(p));
        self.lnf_g.acc(grad, dg.iter());
        self.lnf_b.acc(grad, db.iter());
        for (l, lc) in self.layers.iter().zip(&c.layers).rev() {
            // feed-forward block
            self.acc_linear(grad, l.w2, l.b2, &lc.g, &dhid);
            let dgel = dhid.dot(&l.w2.mat(p).t());
            let du = &dgel * &lc.u.mapv(gelu_grad);
            self.acc_linear(grad, l.w1, l.b1, &lc.b, &du);
            let dbn = du.dot(&l.w1.mat(p).t());
            let (dx2, dg2, db2) = ln_backward(&dbn, &lc.ln2, l.ln2_g.vec(p));
            l.ln2_g.acc(grad, dg2.iter());
            l.ln2_b.acc(grad, db2.iter());
            dhid = dhid + dx2;
            // attention block
            self.acc_linear(grad, l.wo, l.bo, &lc.o, &dhid);
            let do_ = dhid.dot(&l.wo.mat(p).t());
            let mut dq = Array2::zeros((n, self.d));
            let mut dk = Array2::zeros((n, self.d));
            let mut dv = Array2::zeros((n, self.d));
            for hd in 0..self.heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let pr = &lc.probs[hd];
                let doh = do_.slice(cols);
                let dp = doh.dot(&lc.v.slice(cols).t());
                dv.slice_mut(cols).assign(&pr.t().dot(&doh));
                let rowdot = (&dp * pr).sum_axis(Axis(1));
                let mut ds = dp;
                for (i, mut row) in ds.rows_mut().into_iter().enumerate() {
                    row -= rowdot[i];
                }
                let ds = ds * pr * scale;
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            self.acc_linear(grad, l.wq, l.bq, &lc.a, &dq);
            self.acc_linear(grad, l.wk, l.bk, &lc.a, &dk);
            self.acc_linear(grad, l.wv, l.bv, &lc.a, &dv);
            let da = dq.dot(&l.wq.mat(p).t()) + dk.dot(&l.wk.mat(p).t()) + dv.dot(&l.wv.mat(p).t());
            let (dx1, dg1, db1) = ln_backward(&da, &lc.ln1, l.ln1_g.vec(p));
            l.ln1_g.acc(grad, dg1.iter());
            l.ln1_b.acc(grad, db1.iter());
            dhid = dhid + dx1;
        }
        self.acc_linear(grad, self.w_in, self.b_in, &c.x, &dhid);
        let pos = Slot {
            off: self.pos.off,
            rows: n,
            cols: self.d,
        };
        pos.acc(grad, dhid.iter());
    }

    /// Gradients of `y = x W + b` given `dy`.
    fn acc_linear(&self, grad: &mut [f64], w: Slot, b: Slot, x: &Array2<f64>, dy: &Array2<f64>) {
        w.acc(grad, x.t().dot(dy).iter());
        b.acc(grad, dy.sum_axis(Axis(0)).iter());
    }
}

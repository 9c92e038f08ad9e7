use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Named parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Location of one block: `rows × cols`, or a vector when `rows == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Slot {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn mat<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.off..self.off + self.len()]).expect("slot shape")
    }

    pub fn vec<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.off..self.off + self.len()])
    }

    /// Adds `values` (in logical row-major order) into the gradient block.
    pub fn acc<'a, I: IntoIterator<Item = &'a f64>>(&self, grad: &mut [f64], values: I) {
        for (g, v) in grad[self.off..self.off + self.len()].iter_mut().zip(values) {
            *g += *v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// Uniform on `[-a, a]`.
    Uniform(f64),
    Const(f64),
    /// LSTM bias over gates `[i, f, g, o]` of width `n`: forget gate 1, others 0.
    ForgetBias(usize),
}

#[derive(Debug, Default, Clone)]
pub(crate) struct LayoutBuilder {
    pub shapes: Vec<ParamShape>,
    pub inits: Vec<(Slot, Init)>,
    pub total: usize,
}

impl LayoutBuilder {
    /// Weight matrix with scaled-uniform (Glorot) initialization.
    pub fn weight(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Slot {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        self.mat(name, rows, cols, Init::Uniform(a))
    }

    pub fn mat(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Slot {
        let s = Slot {
            off: self.total,
            rows,
            cols,
        };
        self.shapes.push(ParamShape {
            name: name.into(),
            shape: vec![rows, cols],
        });
        self.inits.push((s, init));
        self.total += rows * cols;
        s
    }

    pub fn vec(&mut self, name: impl Into<String>, n: usize, init: Init) -> Slot {
        let s = Slot {
            off: self.total,
            rows: 1,
            cols: n,
        };
        self.shapes.push(ParamShape {
            name: name.into(),
            shape: vec![n],
        });
        self.inits.push((s, init));
        self.total += n;
        s
    }
}

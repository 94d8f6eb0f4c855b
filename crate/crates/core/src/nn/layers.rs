use alloc::format;
use alloc::vec::Vec;

use super::{Graph, Mat, ParamId, ParamStore, Var};
use crate::rng::Rng;

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / libm::sqrt(fan_in as f64)
}

/// `y = x W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = fan_in_bound(input);
        Linear {
            weight: store.add_uniform(&format!("{name}.weight"), input, output, bound, rng),
            bias: store.add_uniform(&format!("{name}.bias"), 1, output, bound, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

/// Same-padded 1-D convolution over the rows (time) of an L x C input.
#[derive(Clone, Copy, Debug)]
pub struct Conv1d {
    pub kernel: usize,
    pub linear: Linear,
}

impl Conv1d {
    pub fn new(store: &mut ParamStore, name: &str, channels_in: usize, channels_out: usize, kernel: usize, rng: &mut Rng) -> Self {
        Conv1d { kernel, linear: Linear::new(store, name, kernel * channels_in, channels_out, rng) }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let cols = g.unfold(x, self.kernel);
        self.linear.forward(g, cols)
    }
}

/// Recurrent state `(h, c)`, each 1 x H.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Mat,
    pub c: Mat,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: Mat::zeros(1, hidden), c: Mat::zeros(1, hidden) }
    }
}

/// Unidirectional LSTM layer with separate input and recurrent weights.
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub recurrent_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = fan_in_bound(hidden);
        Lstm {
            input_weight: store.add_uniform(&format!("{name}.w_ih"), input, 4 * hidden, bound, rng),
            recurrent_weight: store.add_uniform(&format!("{name}.w_hh"), hidden, 4 * hidden, bound, rng),
            bias: store.add_uniform(&format!("{name}.bias"), 1, 4 * hidden, bound, rng),
            hidden,
        }
    }

    /// Input projection `x W_ih` for any number of rows.
    pub fn project(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.input_weight);
        g.matmul(x, w)
    }

    /// One step from a projected input row. Returns `(h, c)`.
    pub fn step(&self, g: &mut Graph, projected: Var, h: Var, c: Var) -> (Var, Var) {
        let whh = g.param(self.recurrent_weight);
        let b = g.param(self.bias);
        let rec = g.matmul(h, whh);
        let z = g.add(projected, rec);
        let z = g.add_row(z, b);
        let hc = g.lstm_cell(z, c);
        let h = g.slice_cols(hc, 0, self.hidden);
        let c = g.slice_cols(hc, self.hidden, 2 * self.hidden);
        (h, c)
    }

    /// Runs over the rows of `x` (L x in) from zero state, optionally right
    /// to left. Output rows stay in time order.
    pub fn sequence(&self, g: &mut Graph, x: Var, reverse: bool) -> Var {
        let len = g.shape(x).0;
        let proj = self.project(g, x);
        let mut h = g.input(Mat::zeros(1, self.hidden));
        let mut c = g.input(Mat::zeros(1, self.hidden));
        let mut outs: Vec<Var> = Vec::with_capacity(len);
        let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
        for t in order {
            let row = g.slice_rows(proj, t, t + 1);
            (h, c) = self.step(g, row, h, c);
            outs.push(h);
        }
        if reverse {
            outs.reverse();
        }
        g.concat_rows(&outs)
    }
}

/// Bidirectional layer: forward and backward halves concatenated per row.
pub fn bilstm(g: &mut Graph, fwd: &Lstm, bwd: &Lstm, x: Var) -> Var {
    let f = fwd.sequence(g, x, false);
    let b = bwd.sequence(g, x, true);
    g.concat_cols(&[f, b])
}

//! Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
//! the tape is already topologically sorted.

use alloc::vec;
use alloc::vec::Vec;

use super::{Grads, Mat, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Mask(Var, Vec<f64>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Unfold(Var, usize),
    LstmCell(Var, Var),
    SumSqErr(Var, Mat),
}

struct Node {
    /// `None` for parameters, which are read from the store.
    value: Option<Mat>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { value: Some(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; gradients stop here.
    pub fn input(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value: Some(value), op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id), requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).matmul(self.value(b));
        self.push(y, Op::MatMul(a, b), &[a, b])
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| f(*p, *q)).collect();
        Mat::from_vec(x.rows(), x.cols(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Mat {
        let x = self.value(a);
        Mat::from_vec(x.rows(), x.cols(), x.data().iter().map(|v| f(*v)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip_map(a, b, |p, q| p + q);
        self.push(y, Op::Add(a, b), &[a, b])
    }

    /// Adds the 1 x n row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut y = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((1, y.cols()), b.shape(), "bias shape mismatch");
        for r in 0..y.rows() {
            for (d, s) in y.row_mut(r).iter_mut().zip(b.data()) {
                *d += s;
            }
        }
        self.push(y, Op::AddRow(a, bias), &[a, bias])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip_map(a, b, |p, q| p * q);
        self.push(y, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let y = self.map(a, |v| v * k);
        self.push(y, Op::Scale(a, k), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.map(a, sigmoid);
        self.push(y, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.map(a, libm::tanh);
        self.push(y, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = self.map(a, |v| v.max(0.0));
        self.push(y, Op::Relu(a), &[a])
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let x = self.value(a);
        assert_eq!(x.data().len(), mask.len());
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let y = Mat::from_vec(x.rows(), x.cols(), data);
        self.push(y, Op::Mask(a, mask), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut y = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.value(*p);
                assert_eq!(src.rows(), rows, "concat_cols row mismatch");
                y.row_mut(r)[off..off + src.cols()].copy_from_slice(src.row(r));
                off += src.cols();
            }
        }
        self.push(y, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        let mut y = Mat::zeros(x.rows(), end - start);
        for r in 0..x.rows() {
            y.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        self.push(y, Op::SliceCols(a, start), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for p in parts {
            let src = self.value(*p);
            assert_eq!(src.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(src.data());
        }
        let y = Mat::from_vec(data.len() / cols.max(1), cols, data);
        self.push(y, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        let y = Mat::from_vec(end - start, x.cols(), x.data()[start * x.cols()..end * x.cols()].to_vec());
        self.push(y, Op::SliceRows(a, start), &[a])
    }

    /// Row lookup: output row `i` is `table[indices[i]]`.
    pub fn gather(&mut self, table: Var, indices: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in &indices {
            data.extend_from_slice(t.row(i));
        }
        let y = Mat::from_vec(indices.len(), t.cols(), data);
        self.push(y, Op::Gather(table, indices), &[table])
    }

    /// Zero-padded "same" im2col for a 1-D convolution over rows: output row
    /// `l` holds input rows `l - k/2 ..= l + k/2` side by side.
    pub fn unfold(&mut self, a: Var, kernel: usize) -> Var {
        let x = self.value(a);
        let (len, ch) = x.shape();
        let half = kernel / 2;
        let mut y = Mat::zeros(len, kernel * ch);
        for l in 0..len {
            for j in 0..kernel {
                let src = l as isize + j as isize - half as isize;
                if src >= 0 && (src as usize) < len {
                    y.row_mut(l)[j * ch..(j + 1) * ch].copy_from_slice(x.row(src as usize));
                }
            }
        }
        self.push(y, Op::Unfold(a, kernel), &[a])
    }

    /// Fused LSTM cell. `gates` is B x 4H pre-activation in (i, f, g, o)
    /// order; output is B x 2H holding `[h | c]`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let (z, c0) = (self.value(gates), self.value(c_prev));
        let (b, four_h) = z.shape();
        let h = four_h / 4;
        assert_eq!(c0.shape(), (b, h), "cell state shape mismatch");
        let mut y = Mat::zeros(b, 2 * h);
        for r in 0..b {
            let zr = z.row(r);
            let cr = c0.row(r);
            let out = y.row_mut(r);
            for k in 0..h {
                let i = sigmoid(zr[k]);
                let f = sigmoid(zr[h + k]);
                let g = libm::tanh(zr[2 * h + k]);
                let o = sigmoid(zr[3 * h + k]);
                let c = f * cr[k] + i * g;
                out[k] = o * libm::tanh(c);
                out[h + k] = c;
            }
        }
        self.push(y, Op::LstmCell(gates, c_prev), &[gates, c_prev])
    }

    /// `sum((a - target)^2)` as a 1 x 1 node.
    pub fn sum_sq_err(&mut self, a: Var, target: Mat) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), target.shape(), "loss target shape mismatch");
        let s = x.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::SumSqErr(a, target), &[a])
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut node_grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Mat>> = (0..self.params.len()).map(|_| None).collect();
        node_grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = node_grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let mut acc = Acc { graph: self, nodes: &mut node_grads, params: &mut param_grads };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => match &mut acc.params[id.0] {
                    Some(g) => g.add_assign(&dy),
                    slot => *slot = Some(dy),
                },
                Op::MatMul(a, b) => {
                    if let Some(ga) = acc.slot(*a) {
                        let d = dy.matmul_t(self.value(*b));
                        ga.add_assign(&d);
                    }
                    if let Some(gb) = acc.slot(*b) {
                        gb.add_t_matmul(self.value(*a), &dy);
                    }
                }
                Op::Add(a, b) => {
                    acc.add(*a, &dy);
                    acc.add(*b, &dy);
                }
                Op::AddRow(a, bias) => {
                    acc.add(*a, &dy);
                    if let Some(gb) = acc.slot(*bias) {
                        for r in 0..dy.rows() {
                            for (d, s) in gb.data_mut().iter_mut().zip(dy.row(r)) {
                                *d += s;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc.add_map(*a, &dy, |i, g| g * vb.data()[i]);
                    acc.add_map(*b, &dy, |i, g| g * va.data()[i]);
                }
                Op::Scale(a, k) => acc.add_map(*a, &dy, |_, g| g * k),
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    acc.add_map(*a, &dy, |i, g| {
                        let s = y.data()[i];
                        g * s * (1.0 - s)
                    });
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    acc.add_map(*a, &dy, |i, g| {
                        let t = y.data()[i];
                        g * (1.0 - t * t)
                    });
                }
                Op::Relu(a) => {
                    let y = node.value.as_ref().unwrap();
                    acc.add_map(*a, &dy, |i, g| if y.data()[i] > 0.0 { g } else { 0.0 });
                }
                Op::Mask(a, m) => acc.add_map(*a, &dy, |i, g| g * m[i]),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if let Some(gp) = acc.slot(*p) {
                            for r in 0..dy.rows() {
                                for (d, s) in gp.row_mut(r).iter_mut().zip(&dy.row(r)[off..off + w]) {
                                    *d += s;
                                }
                            }
                        }
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    if let Some(ga) = acc.slot(*a) {
                        for r in 0..dy.rows() {
                            for (d, s) in ga.row_mut(r)[*start..*start + dy.cols()].iter_mut().zip(dy.row(r)) {
                                *d += s;
                            }
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(*p).rows();
                        if let Some(gp) = acc.slot(*p) {
                            let src = &dy.data()[off * dy.cols()..(off + h) * dy.cols()];
                            for (d, s) in gp.data_mut().iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                        off += h;
                    }
                }
                Op::SliceRows(a, start) => {
                    if let Some(ga) = acc.slot(*a) {
                        let cols = dy.cols();
                        let dst = &mut ga.data_mut()[start * cols..(start + dy.rows()) * cols];
                        for (d, s) in dst.iter_mut().zip(dy.data()) {
                            *d += s;
                        }
                    }
                }
                Op::Gather(table, indices) => {
                    if let Some(gt) = acc.slot(*table) {
                        for (r, &i) in indices.iter().enumerate() {
                            for (d, s) in gt.row_mut(i).iter_mut().zip(dy.row(r)) {
                                *d += s;
                            }
                        }
                    }
                }
                Op::Unfold(a, kernel) => {
                    if let Some(ga) = acc.slot(*a) {
                        let (len, ch) = ga.shape();
                        let half = kernel / 2;
                        for l in 0..len {
                            for j in 0..*kernel {
                                let src = l as isize + j as isize - half as isize;
                                if src >= 0 && (src as usize) < len {
                                    let g = &dy.row(l)[j * ch..(j + 1) * ch];
                                    for (d, s) in ga.row_mut(src as usize).iter_mut().zip(g) {
                                        *d += s;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::LstmCell(gates, c_prev) => {
                    let z = self.value(*gates);
                    let c0 = self.value(*c_prev);
                    let y = node.value.as_ref().unwrap();
                    let (b, four_h) = z.shape();
                    let h = four_h / 4;
                    let mut dz = Mat::zeros(b, four_h);
                    let mut dc0 = Mat::zeros(b, h);
                    for r in 0..b {
                        let (zr, cr, yr, gr) = (z.row(r), c0.row(r), y.row(r), dy.row(r));
                        for k in 0..h {
                            let i = sigmoid(zr[k]);
                            let f = sigmoid(zr[h + k]);
                            let g = libm::tanh(zr[2 * h + k]);
                            let o = sigmoid(zr[3 * h + k]);
                            let tc = libm::tanh(yr[h + k]);
                            let dh = gr[k];
                            let dc = gr[h + k] + dh * o * (1.0 - tc * tc);
                            let dzr = dz.row_mut(r);
                            dzr[k] = dc * g * i * (1.0 - i);
                            dzr[h + k] = dc * cr[k] * f * (1.0 - f);
                            dzr[2 * h + k] = dc * i * (1.0 - g * g);
                            dzr[3 * h + k] = dh * tc * o * (1.0 - o);
                            dc0.row_mut(r)[k] = dc * f;
                        }
                    }
                    acc.add(*gates, &dz);
                    acc.add(*c_prev, &dc0);
                }
                Op::SumSqErr(a, target) => {
                    let x = self.value(*a);
                    let k = 2.0 * dy.data()[0];
                    acc.add_map(*a, &dy_like(x), |i, _| k * (x.data()[i] - target.data()[i]));
                }
            }
        }
        Grads(param_grads)
    }
}

fn dy_like(x: &Mat) -> Mat {
    Mat::zeros(x.rows(), x.cols())
}

/// Gradient accumulator split from the tape so values stay borrowable.
struct Acc<'a, 'g, 'p> {
    graph: &'g Graph<'p>,
    nodes: &'a mut Vec<Option<Mat>>,
    params: &'a mut Vec<Option<Mat>>,
}

impl Acc<'_, '_, '_> {
    fn slot(&mut self, v: Var) -> Option<&mut Mat> {
        let node = &self.graph.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let (r, c) = self.graph.shape(v);
        Some(match node.op {
            Op::Param(id) => self.params[id.0].get_or_insert_with(|| Mat::zeros(r, c)),
            _ => self.nodes[v.0].get_or_insert_with(|| Mat::zeros(r, c)),
        })
    }

    fn add(&mut self, v: Var, d: &Mat) {
        if let Some(g) = self.slot(v) {
            g.add_assign(d);
        }
    }

    fn add_map(&mut self, v: Var, dy: &Mat, f: impl Fn(usize, f64) -> f64) {
        if let Some(g) = self.slot(v) {
            for (i, (d, s)) in g.data_mut().iter_mut().zip(dy.data()).enumerate() {
                *d += f(i, *s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Central differences on every parameter entry of a small graph.
    fn check(store: &mut ParamStore, build: impl Fn(&mut Graph) -> Var) {
        let grads = {
            let mut g = Graph::new(store);
            let loss = build(&mut g);
            g.backward(loss)
        };
        let eps = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.get(id).data().len() {
                let orig = store.get(id).data()[k];
                store.get_mut(id).data_mut()[k] = orig + eps;
                let up = {
                    let mut g = Graph::new(store);
                    let l = build(&mut g);
                    g.value(l).data()[0]
                };
                store.get_mut(id).data_mut()[k] = orig - eps;
                let down = {
                    let mut g = Graph::new(store);
                    let l = build(&mut g);
                    g.value(l).data()[0]
                };
                store.get_mut(id).data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
                assert!(
                    (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "{} [{k}]: analytic {analytic} numeric {numeric}",
                    store.name(id)
                );
            }
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = Rng::new(7);
        let mut store = ParamStore::new();
        let x = store.add_uniform("x", 4, 3, 1.0, &mut rng);
        let w = store.add_uniform("w", 9, 8, 0.5, &mut rng);
        let b = store.add_uniform("b", 1, 8, 0.5, &mut rng);
        let c = store.add_uniform("c", 4, 2, 0.5, &mut rng);
        let table = store.add_uniform("table", 5, 3, 1.0, &mut rng);
        let target = Mat::from_vec(4, 2, (0..8).map(|i| i as f64 * 0.1).collect());
        check(&mut store, |g| {
            let xv = g.param(x);
            let tv = g.param(table);
            let looked = g.gather(tv, vec![4, 0, 0, 2]);
            let xs = g.add(xv, looked);
            let unf = g.unfold(xs, 3);
            let wv = g.param(w);
            let bv = g.param(b);
            let z = g.matmul(unf, wv);
            let z = g.add_row(z, bv);
            let cv = g.param(c);
            let hc = g.lstm_cell(z, cv);
            let h = g.slice_cols(hc, 0, 2);
            let cc = g.slice_cols(hc, 2, 4);
            let s = g.sigmoid(h);
            let t = g.tanh(cc);
            let m = g.mul(s, t);
            let r = g.relu(m);
            let masked = g.mask(r, vec![2.0, 0.0, 1.0, 1.0, 0.5, 2.0, 1.0, 1.0]);
            let top = g.slice_rows(masked, 0, 2);
            let bottom = g.slice_rows(hc, 2, 4);
            let bottom = g.slice_cols(bottom, 1, 3);
            let stacked = g.concat_rows(&[top, bottom]);
            let wide = g.concat_cols(&[stacked, stacked]);
            let narrow = g.slice_cols(wide, 1, 3);
            let scaled = g.scale(narrow, 1.5);
            g.sum_sq_err(scaled, target.clone())
        });
    }
}

//! Reverse-mode tape over dynamically shaped 64-bit arrays.
//!
//! Graphs are built define-by-run: every operation appends a node, so the
//! tape is always topologically sorted and backward is a single reverse
//! sweep. Parameters enter as leaves bound to offsets in a flat
//! [`ParamVector`](super::ParamVector); backward accumulates their gradients
//! into one flat array.

use ndarray::{Array2, ArrayD, Axis, Ix1, Ix2, IxDyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch {a:?} vs {b:?}")]
    ShapeMismatch { op: &'static str, a: Vec<usize>, b: Vec<usize> },
    #[error("{op}: non-finite value")]
    NonFiniteValue { op: &'static str },
    #[error("parameter slice `{0}` not registered")]
    UnknownSlice(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Param { offset: usize },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MinEl(NodeId, NodeId),
    MaxEl(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    AddBias(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    LogSoftmax(NodeId),
    SumAll(NodeId),
    Reshape(NodeId),
    ConcatCols(NodeId, NodeId),
    GatherRows(NodeId, Vec<usize>),
    Conv2d { x: NodeId, w: NodeId, b: NodeId, pad: usize, cols: Array2<f64> },
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
}

/// One computation graph. Reuse across losses is fine; nodes are append-only.
pub struct Tape {
    nodes: Vec<Node>,
    param_len: usize,
}

impl Tape {
    pub fn new(param_len: usize) -> Tape {
        Tape { nodes: Vec::with_capacity(256), param_len }
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        *v.iter().next().expect("scalar node")
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn leaf1(&mut self, v: &[f64]) -> NodeId {
        self.leaf(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.to_vec()).unwrap())
    }

    /// Leaf bound to a named slice of the flat parameter vector.
    pub fn param(&mut self, value: ArrayD<f64>, offset: usize) -> NodeId {
        self.push(value, Op::Param { offset })
    }

    fn same_shape(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NnError::ShapeMismatch { op, a: sa.to_vec(), b: sb.to_vec() });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("add", a, b)?;
        let v = &self.value(a).clone() + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("sub", a, b)?;
        let v = &self.value(a).clone() - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("mul", a, b)?;
        let v = &self.value(a).clone() * self.value(b);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn min_el(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("min_el", a, b)?;
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.min(y));
        Ok(self.push(v, Op::MinEl(a, b)))
    }

    pub fn max_el(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("max_el", a, b)?;
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.max(y));
        Ok(self.push(v, Op::MaxEl(a, b)))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| c + x);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// `[n, m] + [m]`, the bias broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(bias).shape().to_vec());
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(NnError::ShapeMismatch { op: "add_bias", a: sa, b: sb });
        }
        let m = self.value(a).view().into_dimensionality::<Ix2>().unwrap().to_owned();
        let b = self.value(bias).view().into_dimensionality::<Ix1>().unwrap();
        let v = (&m + &b).into_dyn();
        Ok(self.push(v, Op::AddBias(a, bias)))
    }

    /// `[n, k] × [k, m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NnError::ShapeMismatch { op: "matmul", a: sa, b: sb });
        }
        let ma = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let mb = self.value(b).view().into_dimensionality::<Ix2>().unwrap();
        let v = ma.dot(&mb).into_dyn();
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Row-wise log-softmax of a `[n, m]` matrix.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, NnError> {
        let s = self.value(a).shape().to_vec();
        if s.len() != 2 {
            return Err(NnError::ShapeMismatch { op: "log_softmax", a: s, b: vec![] });
        }
        let m = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let mut out = m.to_owned();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            row.mapv_inplace(|x| x - lse);
        }
        Ok(self.push(out.into_dyn(), Op::LogSoftmax(a)))
    }

    /// Sums every element into a scalar (shape `[1]`).
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).iter().sum();
        let v = ArrayD::from_shape_vec(IxDyn(&[1]), vec![s]).unwrap();
        self.push(v, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, NnError> {
        let v = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .map_err(|_| NnError::ShapeMismatch {
                op: "reshape",
                a: self.value(a).shape().to_vec(),
                b: shape.to_vec(),
            })?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Concatenates `[n, a]` and `[n, b]` into `[n, a + b]`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(NnError::ShapeMismatch { op: "concat_cols", a: sa, b: sb });
        }
        let ma = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let mb = self.value(b).view().into_dimensionality::<Ix2>().unwrap();
        let v = ndarray::concatenate(Axis(1), &[ma, mb]).unwrap().into_dyn();
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    /// `out[i] = a[i, idx[i]]`; shape `[n]`.
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId, NnError> {
        let s = self.value(a).shape().to_vec();
        if s.len() != 2 || s[0] != idx.len() || idx.iter().any(|&j| j >= s[1]) {
            return Err(NnError::ShapeMismatch { op: "gather_rows", a: s, b: vec![idx.len()] });
        }
        let m = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let v: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| m[[i, j]]).collect();
        let v = ArrayD::from_shape_vec(IxDyn(&[idx.len()]), v).unwrap();
        Ok(self.push(v, Op::GatherRows(a, idx.to_vec())))
    }

    /// Stride-1 convolution of `[n, c_in, h, w]` with `[c_out, c_in, k, k]`
    /// plus per-channel bias, zero padding `pad`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        pad: usize,
    ) -> Result<NodeId, NnError> {
        let sx = self.value(x).shape().to_vec();
        let sw = self.value(w).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        let bad = || NnError::ShapeMismatch { op: "conv2d", a: sx.clone(), b: sw.clone() };
        if sx.len() != 4 || sw.len() != 4 || sb.len() != 1 {
            return Err(bad());
        }
        let (n, c_in, h, w_in) = (sx[0], sx[1], sx[2], sx[3]);
        let (c_out, wc_in, k, k2) = (sw[0], sw[1], sw[2], sw[3]);
        if wc_in != c_in || k != k2 || sb[0] != c_out || h + 2 * pad < k || w_in + 2 * pad < k {
            return Err(bad());
        }
        let (oh, ow) = (h + 2 * pad - k + 1, w_in + 2 * pad - k + 1);

        let xs = self.value(x);
        let mut cols = Array2::<f64>::zeros((n * oh * ow, c_in * k * k));
        for img in 0..n {
            for or in 0..oh {
                for oc in 0..ow {
                    let row = (img * oh + or) * ow + oc;
                    let mut col = 0usize;
                    for ch in 0..c_in {
                        for kr in 0..k {
                            for kc in 0..k {
                                let ir = or + kr;
                                let ic = oc + kc;
                                let v = if ir < pad || ic < pad || ir - pad >= h || ic - pad >= w_in
                                {
                                    0.0
                                } else {
                                    xs[[img, ch, ir - pad, ic - pad]]
                                };
                                cols[[row, col]] = v;
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
        let wm = self
            .value(w)
            .view()
            .into_shape_with_order((c_out, c_in * k * k))
            .unwrap()
            .to_owned();
        let bias = self.value(b).view().into_dimensionality::<Ix1>().unwrap().to_owned();
        let mut flat = cols.dot(&wm.t()); // [n*oh*ow, c_out]
        flat += &bias;
        // Reorder to [n, c_out, oh, ow].
        let mut out = ArrayD::<f64>::zeros(IxDyn(&[n, c_out, oh, ow]));
        for img in 0..n {
            for or in 0..oh {
                for oc in 0..ow {
                    let row = (img * oh + or) * ow + oc;
                    for ch in 0..c_out {
                        out[[img, ch, or, oc]] = flat[[row, ch]];
                    }
                }
            }
        }
        Ok(self.push(out, Op::Conv2d { x, w, b, pad, cols }))
    }

    /// Reverse sweep from the scalar `loss`; returns gradients of every
    /// parameter leaf accumulated into one flat array.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<f64>, NnError> {
        if self.value(loss).len() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                a: self.value(loss).shape().to_vec(),
                b: vec![1],
            });
        }
        if !self.scalar(loss).is_finite() {
            return Err(NnError::NonFiniteValue { op: "loss" });
        }
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(ArrayD::from_shape_vec(IxDyn(&[1]), vec![1.0]).unwrap());
        let mut param_grads = vec![0.0; self.param_len];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let send = |grads: &mut Vec<Option<ArrayD<f64>>>, to: NodeId, delta: ArrayD<f64>| {
                match &mut grads[to.0] {
                    Some(acc) => *acc += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param { offset } => {
                    for (dst, src) in param_grads[*offset..*offset + g.len()]
                        .iter_mut()
                        .zip(g.iter())
                    {
                        *dst += *src;
                    }
                }
                Op::Add(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g.mapv(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    send(&mut grads, *a, ga);
                    send(&mut grads, *b, gb);
                }
                Op::MinEl(a, b) | Op::MaxEl(a, b) => {
                    // Subgradient: ties route to the first argument.
                    let take_a = {
                        let out = &self.nodes[i].value;
                        let va = self.value(*a);
                        let mut mask = va.clone();
                        mask.zip_mut_with(out, |x, &o| *x = (*x == o) as u8 as f64);
                        mask
                    };
                    let ga = &g * &take_a;
                    let gb = &g * &take_a.mapv(|m| 1.0 - m);
                    send(&mut grads, *a, ga);
                    send(&mut grads, *b, gb);
                }
                Op::Neg(a) => send(&mut grads, *a, g.mapv(|x| -x)),
                Op::Scale(a, c) => send(&mut grads, *a, g.mapv(|x| c * x)),
                Op::AddScalar(a) => send(&mut grads, *a, g),
                Op::Relu(a) => {
                    let mask = self.value(*a).mapv(|x| (x > 0.0) as u8 as f64);
                    send(&mut grads, *a, &g * &mask);
                }
                Op::Tanh(a) => {
                    let d = self.nodes[i].value.mapv(|y| 1.0 - y * y);
                    send(&mut grads, *a, &g * &d);
                }
                Op::Sigmoid(a) => {
                    let d = self.nodes[i].value.mapv(|y| y * (1.0 - y));
                    send(&mut grads, *a, &g * &d);
                }
                Op::Exp(a) => send(&mut grads, *a, &g * &self.nodes[i].value),
                Op::Ln(a) => {
                    let d = self.value(*a).mapv(|x| 1.0 / x);
                    send(&mut grads, *a, &g * &d);
                }
                Op::Square(a) => {
                    let d = self.value(*a).mapv(|x| 2.0 * x);
                    send(&mut grads, *a, &g * &d);
                }
                Op::Clamp(a, lo, hi) => {
                    let mask = self.value(*a).mapv(|x| (x > *lo && x < *hi) as u8 as f64);
                    send(&mut grads, *a, &g * &mask);
                }
                Op::AddBias(a, bias) => {
                    let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                    let gb = gm.sum_axis(Axis(0)).into_dyn();
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *bias, gb);
                }
                Op::MatMul(a, b) => {
                    let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                    let ma = self.value(*a).view().into_dimensionality::<Ix2>().unwrap();
                    let mb = self.value(*b).view().into_dimensionality::<Ix2>().unwrap();
                    send(&mut grads, *a, gm.dot(&mb.t()).into_dyn());
                    send(&mut grads, *b, ma.t().dot(&gm).into_dyn());
                }
                Op::LogSoftmax(a) => {
                    let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                    let y = self.nodes[i].value.view().into_dimensionality::<Ix2>().unwrap();
                    let mut out = gm.to_owned();
                    for (mut orow, (grow, yrow)) in
                        out.rows_mut().into_iter().zip(gm.rows().into_iter().zip(y.rows()))
                    {
                        let gsum: f64 = grow.sum();
                        for (o, (&gv, &yv)) in
                            orow.iter_mut().zip(grow.iter().zip(yrow.iter()))
                        {
                            *o = gv - yv.exp() * gsum;
                        }
                    }
                    send(&mut grads, *a, out.into_dyn());
                }
                Op::SumAll(a) => {
                    let s = g[[0]];
                    let d = ArrayD::from_elem(self.value(*a).raw_dim(), s);
                    send(&mut grads, *a, d);
                }
                Op::Reshape(a) => {
                    let d = g
                        .into_shape_with_order(self.value(*a).raw_dim())
                        .expect("reshape grad");
                    send(&mut grads, *a, d);
                }
                Op::ConcatCols(a, b) => {
                    let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                    let na = self.value(*a).shape()[1];
                    let ga = gm.slice(ndarray::s![.., ..na]).to_owned().into_dyn();
                    let gb = gm.slice(ndarray::s![.., na..]).to_owned().into_dyn();
                    send(&mut grads, *a, ga);
                    send(&mut grads, *b, gb);
                }
                Op::GatherRows(a, idx) => {
                    let mut d = ArrayD::zeros(self.value(*a).raw_dim());
                    for (r, &c) in idx.iter().enumerate() {
                        d[[r, c]] = g[[r]];
                    }
                    send(&mut grads, *a, d);
                }
                Op::Conv2d { x, w, b, pad, cols } => {
                    let so = self.nodes[i].value.shape().to_vec();
                    let (n, c_out, oh, ow) = (so[0], so[1], so[2], so[3]);
                    let sw = self.value(*w).shape().to_vec();
                    let (c_in, k) = (sw[1], sw[2]);
                    // Flatten grad to [n*oh*ow, c_out] matching `cols` rows.
                    let mut gflat = Array2::<f64>::zeros((n * oh * ow, c_out));
                    for img in 0..n {
                        for or in 0..oh {
                            for oc in 0..ow {
                                let row = (img * oh + or) * ow + oc;
                                for ch in 0..c_out {
                                    gflat[[row, ch]] = g[[img, ch, or, oc]];
                                }
                            }
                        }
                    }
                    // Weight grad: gflat^T · cols → [c_out, c_in*k*k].
                    let gw = gflat.t().dot(cols);
                    let gw = gw
                        .into_shape_with_order(IxDyn(&[c_out, c_in, k, k]))
                        .unwrap();
                    send(&mut grads, *w, gw);
                    // Bias grad: column sums.
                    let gb = gflat.sum_axis(Axis(0)).into_dyn();
                    send(&mut grads, *b, gb);
                    // Input grad: scatter gflat · W back through im2col.
                    let wm = self
                        .value(*w)
                        .view()
                        .into_shape_with_order((c_out, c_in * k * k))
                        .unwrap()
                        .to_owned();
                    let gcols = gflat.dot(&wm); // [n*oh*ow, c_in*k*k]
                    let sx = self.value(*x).shape().to_vec();
                    let (h, w_in) = (sx[2], sx[3]);
                    let mut gx = ArrayD::<f64>::zeros(IxDyn(&sx));
                    for img in 0..n {
                        for or in 0..oh {
                            for oc in 0..ow {
                                let row = (img * oh + or) * ow + oc;
                                let mut col = 0usize;
                                for ch in 0..c_in {
                                    for kr in 0..k {
                                        for kc in 0..k {
                                            let ir = or + kr;
                                            let ic = oc + kc;
                                            if ir >= *pad
                                                && ic >= *pad
                                                && ir - pad < h
                                                && ic - pad < w_in
                                            {
                                                gx[[img, ch, ir - pad, ic - pad]] +=
                                                    gcols[[row, col]];
                                            }
                                            col += 1;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    send(&mut grads, *x, gx);
                }
            }
        }

        if param_grads.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteValue { op: "backward" });
        }
        Ok(param_grads)
    }
}

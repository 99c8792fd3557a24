use super::gemm::{gemm, MatMut, MatRef};
use super::{AutodiffError, Tensor};

/// Minimum Euclidean norm accepted by [`Graph::l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    CausalConv { dilation: usize },
    AddBias,
    Relu,
    Linear,
    L2Normalize,
    StopGradient,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sum,
    SumSquares,
    SoftmaxCrossEntropy { targets: Vec<usize> },
    SelectColumns { cols: Vec<usize> },
    ConcatRows,
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

/// Dynamic computation graph. Values are computed eagerly as nodes are
/// added; [`Graph::backward`] replays the nodes in reverse order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that requires one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros shaped like `like` when no gradient
    /// reached it.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, vec![], value, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor, requires_grad: bool) -> Var {
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `input` is `[c_in × time]`, `kernel` is `[c_out × c_in × k]`. The
    /// input is implicitly left-padded with `(k−1)·dilation` zero frames, so
    /// the output is `[c_out × time]` and column `t` only sees input columns
    /// `≤ t`. Tap `k−1` multiplies the current frame.
    pub fn causal_conv1d(&mut self, input: Var, kernel: Var, dilation: usize) -> Result<Var, AutodiffError> {
        if dilation == 0 {
            return Err(AutodiffError::Config("dilation must be ≥ 1".into()));
        }
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[kernel.0].value;
        let (c_in, time) = x.dims2();
        let [c_out, w_in, k] = w.shape() else {
            return Err(AutodiffError::Config(format!("kernel must be 3-D, got {:?}", w.shape())));
        };
        let (c_out, k) = (*c_out, *k);
        if *w_in != c_in {
            return Err(AutodiffError::Config(format!(
                "kernel expects {w_in} input channels, input has {c_in}"
            )));
        }
        let mut out = vec![0.0; c_out * time];
        for tap in 0..k {
            let shift = (k - 1 - tap) * dilation;
            if shift >= time {
                continue;
            }
            let n = time - shift;
            gemm(
                1.0,
                MatRef {
                    data: w.data(),
                    offset: tap,
                    rows: c_out,
                    cols: c_in,
                    row_stride: c_in * k,
                    col_stride: k,
                },
                MatRef::row_major(x.data(), 0, c_in, n, time),
                1.0,
                MatMut::row_major(&mut out, shift, c_out, n, time),
            );
        }
        let value = Tensor::matrix(c_out, time, out)?;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(Op::CausalConv { dilation }, vec![input, kernel], value, rg))
    }

    /// Adds `bias[r]` to every entry of row `r`.
    pub fn add_bias(&mut self, input: Var, bias: Var) -> Result<Var, AutodiffError> {
        let x = &self.nodes[input.0].value;
        let b = &self.nodes[bias.0].value;
        let (rows, cols) = x.dims2();
        if b.len() != rows {
            return Err(AutodiffError::Config(format!("bias has {} entries, input has {rows} rows", b.len())));
        }
        let mut out = x.data().to_vec();
        for (r, row) in out.chunks_mut(cols).enumerate() {
            let br = b.data()[r];
            row.iter_mut().for_each(|v| *v += br);
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.any_grad(&[input, bias]);
        Ok(self.push(Op::AddBias, vec![input, bias], value, rg))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = &self.nodes[input.0].value;
        let out = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(Op::Relu, vec![input], value, rg)
    }

    /// `weight · input + bias`, applied to every column of `input`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, AutodiffError> {
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let b = &self.nodes[bias.0].value;
        let (d_in, n) = x.dims2();
        let [d_out, w_in] = w.shape() else {
            return Err(AutodiffError::Config(format!("weight must be 2-D, got {:?}", w.shape())));
        };
        let d_out = *d_out;
        if *w_in != d_in {
            return Err(AutodiffError::Config(format!("weight expects {w_in} inputs, got {d_in}")));
        }
        if b.len() != d_out {
            return Err(AutodiffError::Config(format!("bias has {} entries, expected {d_out}", b.len())));
        }
        let mut out = vec![0.0; d_out * n];
        for (r, row) in out.chunks_mut(n).enumerate() {
            row.fill(b.data()[r]);
        }
        gemm(
            1.0,
            MatRef::row_major(w.data(), 0, d_out, d_in, d_in),
            MatRef::row_major(x.data(), 0, d_in, n, n),
            1.0,
            MatMut::row_major(&mut out, 0, d_out, n, n),
        );
        let shape = if x.shape().len() == 1 { vec![d_out] } else { vec![d_out, n] };
        let value = Tensor::new(shape, out)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(Op::Linear, vec![input, weight, bias], value, rg))
    }

    /// Scales every column to unit Euclidean norm.
    pub fn l2_normalize(&mut self, input: Var) -> Result<Var, AutodiffError> {
        let x = &self.nodes[input.0].value;
        let (rows, cols) = x.dims2();
        let mut out = x.data().to_vec();
        for c in 0..cols {
            let norm = (0..rows).map(|r| out[r * cols + c].powi(2)).sum::<f64>().sqrt();
            if !(norm > NORM_EPS) {
                return Err(AutodiffError::Degenerate { column: c, norm });
            }
            for r in 0..rows {
                out[r * cols + c] /= norm;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(Op::L2Normalize, vec![input], value, rg))
    }

    /// Identity forward; blocks every gradient flowing back through it.
    pub fn stop_gradient(&mut self, input: Var) -> Var {
        let value = self.nodes[input.0].value.clone();
        self.push(Op::StopGradient, vec![input], value, false)
    }

    fn elementwise(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var, AutodiffError> {
        let x = &self.nodes[a.0].value;
        let y = &self.nodes[b.0].value;
        if !x.same_shape(y) {
            return Err(AutodiffError::Shape(format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let out = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(op, vec![a, b], value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise(Op::Add, a, b, |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise(Op::Sub, a, b, |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise(Op::Mul, a, b, |p, q| p * q)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = &self.nodes[input.0].value;
        let out = x.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(Op::Scale(factor), vec![input], value, rg)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.nodes[input.0].value.data().iter().sum();
        let rg = self.any_grad(&[input]);
        self.push(Op::Sum, vec![input], Tensor::scalar(s), rg)
    }

    pub fn sum_squares(&mut self, input: Var) -> Var {
        let s = self.nodes[input.0].value.data().iter().map(|v| v * v).sum();
        let rg = self.any_grad(&[input]);
        self.push(Op::SumSquares, vec![input], Tensor::scalar(s), rg)
    }

    /// Mean over columns of `−log softmax(column)[target]`.
    ///
    /// `logits` is `[classes]` (one target) or `[classes × n]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, AutodiffError> {
        let x = &self.nodes[logits.0].value;
        let (classes, n) = x.dims2();
        if targets.len() != n {
            return Err(AutodiffError::Shape(format!("{} targets for {n} columns", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(AutodiffError::Shape(format!("target {bad} out of range for {classes} classes")));
        }
        if !x.is_finite() {
            return Err(AutodiffError::NonFinite("softmax_cross_entropy logits"));
        }
        let mut total = 0.0;
        for (c, &target) in targets.iter().enumerate() {
            let column = |r: usize| x.data()[r * n + c];
            let max = (0..classes).map(column).fold(f64::NEG_INFINITY, f64::max);
            let lse = (0..classes).map(|r| (column(r) - max).exp()).sum::<f64>().ln() + max;
            total += lse - column(target);
        }
        let value = Tensor::scalar(total / n as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                targets: targets.to_vec(),
            },
            vec![logits],
            value,
            rg,
        ))
    }

    /// Gathers the listed columns into a new `[rows × cols.len()]` matrix.
    pub fn select_columns(&mut self, input: Var, cols: &[usize]) -> Result<Var, AutodiffError> {
        let x = &self.nodes[input.0].value;
        let (rows, n) = x.dims2();
        if cols.is_empty() {
            return Err(AutodiffError::Shape("empty column selection".into()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(AutodiffError::Shape(format!("column {bad} out of range for {n} columns")));
        }
        let m = cols.len();
        let mut out = vec![0.0; rows * m];
        for r in 0..rows {
            for (j, &c) in cols.iter().enumerate() {
                out[r * m + j] = x.data()[r * n + c];
            }
        }
        let value = Tensor::matrix(rows, m, out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(Op::SelectColumns { cols: cols.to_vec() }, vec![input], value, rg))
    }

    /// Stacks inputs with equal column counts on top of each other.
    pub fn concat_rows(&mut self, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let Some(first) = inputs.first() else {
            return Err(AutodiffError::Shape("concat of nothing".into()));
        };
        let (_, n) = self.nodes[first.0].value.dims2();
        let mut out = Vec::new();
        let mut rows = 0;
        for v in inputs {
            let t = &self.nodes[v.0].value;
            let (r, c) = t.dims2();
            if c != n {
                return Err(AutodiffError::Shape(format!("concat column mismatch: {c} vs {n}")));
            }
            rows += r;
            out.extend_from_slice(t.data());
        }
        let all_vectors = inputs.iter().all(|v| self.nodes[v.0].value.shape().len() == 1);
        let shape = if all_vectors { vec![rows] } else { vec![rows, n] };
        let value = Tensor::new(shape, out)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(Op::ConcatRows, inputs.to_vec(), value, rg))
    }

    /// Reverse-mode sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(AutodiffError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(loss_value.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (before, rest) = grads.split_at_mut(i);
            let Some(gout) = rest[0].as_ref() else {
                continue;
            };
            self.backward_node(node, gout, before);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::CausalConv { dilation } => {
                let (input, kernel) = (node.inputs[0], node.inputs[1]);
                let x = val(input);
                let w = val(kernel);
                let (c_in, time) = x.dims2();
                let (c_out, k) = (w.shape()[0], w.shape()[2]);
                for tap in 0..k {
                    let shift = (k - 1 - tap) * dilation;
                    if shift >= time {
                        continue;
                    }
                    let n = time - shift;
                    let g_view = MatRef::row_major(gout.data(), shift, c_out, n, time);
                    if wants(input) {
                        let gx = slot(grads, input, x);
                        gemm(
                            1.0,
                            MatRef {
                                data: w.data(),
                                offset: tap,
                                rows: c_out,
                                cols: c_in,
                                row_stride: c_in * k,
                                col_stride: k,
                            }
                            .t(),
                            g_view,
                            1.0,
                            MatMut::row_major(gx.data_mut(), 0, c_in, n, time),
                        );
                    }
                    if wants(kernel) {
                        let gw = slot(grads, kernel, w);
                        gemm(
                            1.0,
                            g_view,
                            MatRef::row_major(x.data(), 0, c_in, n, time).t(),
                            1.0,
                            MatMut {
                                data: gw.data_mut(),
                                offset: tap,
                                rows: c_out,
                                cols: c_in,
                                row_stride: c_in * k,
                                col_stride: k,
                            },
                        );
                    }
                }
            }
            Op::AddBias => {
                let (input, bias) = (node.inputs[0], node.inputs[1]);
                if wants(input) {
                    accumulate(slot(grads, input, val(input)), gout.data());
                }
                if wants(bias) {
                    let (_, cols) = gout.dims2();
                    let gb = slot(grads, bias, val(bias));
                    for (r, row) in gout.data().chunks(cols).enumerate() {
                        gb.data_mut()[r] += row.iter().sum::<f64>();
                    }
                }
            }
            Op::Relu => {
                let input = node.inputs[0];
                let g = slot(grads, input, val(input));
                for ((acc, &y), &go) in g.data_mut().iter_mut().zip(node.value.data()).zip(gout.data()) {
                    if y > 0.0 {
                        *acc += go;
                    }
                }
            }
            Op::Linear => {
                let (input, weight, bias) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                let x = val(input);
                let w = val(weight);
                let (d_in, n) = x.dims2();
                let d_out = w.shape()[0];
                let g_view = MatRef::row_major(gout.data(), 0, d_out, n, n);
                if wants(input) {
                    let gx = slot(grads, input, x);
                    gemm(
                        1.0,
                        MatRef::row_major(w.data(), 0, d_out, d_in, d_in).t(),
                        g_view,
                        1.0,
                        MatMut::row_major(gx.data_mut(), 0, d_in, n, n),
                    );
                }
                if wants(weight) {
                    let gw = slot(grads, weight, w);
                    gemm(
                        1.0,
                        g_view,
                        MatRef::row_major(x.data(), 0, d_in, n, n).t(),
                        1.0,
                        MatMut::row_major(gw.data_mut(), 0, d_out, d_in, d_in),
                    );
                }
                if wants(bias) {
                    let gb = slot(grads, bias, val(bias));
                    for (r, row) in gout.data().chunks(n).enumerate() {
                        gb.data_mut()[r] += row.iter().sum::<f64>();
                    }
                }
            }
            Op::L2Normalize => {
                let input = node.inputs[0];
                let x = val(input);
                let y = &node.value;
                let (rows, cols) = x.dims2();
                let g = slot(grads, input, x);
                for c in 0..cols {
                    let norm = (0..rows).map(|r| x.data()[r * cols + c].powi(2)).sum::<f64>().sqrt();
                    let dot: f64 = (0..rows).map(|r| y.data()[r * cols + c] * gout.data()[r * cols + c]).sum();
                    for r in 0..rows {
                        let idx = r * cols + c;
                        g.data_mut()[idx] += (gout.data()[idx] - y.data()[idx] * dot) / norm;
                    }
                }
            }
            Op::Add => {
                for &v in &node.inputs {
                    if wants(v) {
                        accumulate(slot(grads, v, val(v)), gout.data());
                    }
                }
            }
            Op::Sub => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                if wants(a) {
                    accumulate(slot(grads, a, val(a)), gout.data());
                }
                if wants(b) {
                    let g = slot(grads, b, val(b));
                    g.data_mut().iter_mut().zip(gout.data()).for_each(|(acc, go)| *acc -= go);
                }
            }
            Op::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                for (this, other) in [(a, b), (b, a)] {
                    if wants(this) {
                        let o = val(other);
                        let g = slot(grads, this, val(this));
                        for ((acc, go), ov) in g.data_mut().iter_mut().zip(gout.data()).zip(o.data()) {
                            *acc += go * ov;
                        }
                    }
                }
            }
            Op::Scale(factor) => {
                let input = node.inputs[0];
                let g = slot(grads, input, val(input));
                g.data_mut().iter_mut().zip(gout.data()).for_each(|(acc, go)| *acc += go * factor);
            }
            Op::Sum => {
                let input = node.inputs[0];
                let go = gout.data()[0];
                slot(grads, input, val(input)).data_mut().iter_mut().for_each(|acc| *acc += go);
            }
            Op::SumSquares => {
                let input = node.inputs[0];
                let go = gout.data()[0];
                let x = val(input);
                let g = slot(grads, input, x);
                g.data_mut().iter_mut().zip(x.data()).for_each(|(acc, v)| *acc += 2.0 * v * go);
            }
            Op::SoftmaxCrossEntropy { targets } => {
                let input = node.inputs[0];
                let x = val(input);
                let (classes, n) = x.dims2();
                let scale = gout.data()[0] / n as f64;
                let g = slot(grads, input, x);
                for (c, &target) in targets.iter().enumerate() {
                    let column = |r: usize| x.data()[r * n + c];
                    let max = (0..classes).map(column).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..classes).map(|r| (column(r) - max).exp()).sum();
                    for r in 0..classes {
                        let p = (column(r) - max).exp() / z;
                        let y = if r == target { 1.0 } else { 0.0 };
                        g.data_mut()[r * n + c] += scale * (p - y);
                    }
                }
            }
            Op::SelectColumns { cols } => {
                let input = node.inputs[0];
                let x = val(input);
                let (rows, n) = x.dims2();
                let m = cols.len();
                let g = slot(grads, input, x);
                for r in 0..rows {
                    for (j, &c) in cols.iter().enumerate() {
                        g.data_mut()[r * n + c] += gout.data()[r * m + j];
                    }
                }
            }
            Op::ConcatRows => {
                let mut offset = 0;
                for &v in &node.inputs {
                    let len = val(v).len();
                    if wants(v) {
                        accumulate(slot(grads, v, val(v)), &gout.data()[offset..offset + len]);
                    }
                    offset += len;
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], var: Var, like: &Tensor) -> &'a mut Tensor {
    grads[var.0].get_or_insert_with(|| Tensor::zeros(like.shape()))
}

fn accumulate(acc: &mut Tensor, delta: &[f64]) {
    acc.data_mut().iter_mut().zip(delta).for_each(|(a, d)| *a += d);
}

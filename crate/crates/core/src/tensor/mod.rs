//! Dense f64 tensors and a tape-based reverse-mode autodiff graph.
//!
//! A [`Graph`] owns every intermediate value. Parameters live outside the
//! graph as [`Tensor`]s; [`Graph::leaf`] copies them in, and after
//! [`Graph::backward`] the leaf gradients are folded back with
//! [`Graph::accumulate_into`].

mod conv;

use crate::error::{Error, Result};
use conv::ConvGeometry;

/// Dense row-major tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!("zero-sized extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} holds {numel} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                expected: vec![self.data.len()],
                got: vec![g.len()],
            });
        }
        let buf = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (b, x) in buf.iter_mut().zip(g) {
            *b += x;
        }
        Ok(())
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeometry,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mse(Var, Var),
    Sse(Var, Var),
    Column {
        input: Var,
        col: usize,
        width: usize,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                kernel,
                bias,
                ..
            } => vec![input, kernel, bias],
            Op::Relu(a) | Op::Scale(a, _) | Op::Sum(a) => vec![a],
            Op::Column { input, .. } => vec![input],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mse(a, b) | Op::Sse(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Append-only computation record. Backward walks it in reverse insertion
/// order, so every node is processed after all of its consumers.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Var {
        let inputs = op.inputs();
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        if cfg!(debug_assertions) && value.iter().any(|v| !v.is_finite()) {
            let finite_inputs = inputs
                .iter()
                .all(|v| self.nodes[v.0].value.iter().all(|x| x.is_finite()));
            debug_assert!(!finite_inputs, "non-finite output from finite inputs in {op:?}");
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Copies a tensor into the graph as a leaf.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let v = self.push(Op::Leaf, t.shape.clone(), t.data.clone());
        self.nodes[v.0].requires_grad = t.requires_grad;
        v
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                expected: self.shape(a).to_vec(),
                got: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// "Same"-padded dilated cross-correlation. `input` is `[C_in,H,W]` or
    /// `[N,C_in,H,W]`; padding per axis totals `dilation * (k - 1)`, split
    /// with the smaller half before.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, dilation: (usize, usize)) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(input), self.shape(kernel), self.shape(bias), dilation)?;
        let value = conv::forward(self.value(input), self.value(kernel), self.value(bias), &geom);
        let shape = geom.output_shape();
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            shape,
            value,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Relu(x), shape, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Add(a, b), shape, value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Sub(a, b), shape, value))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Scale(x, c), shape, value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x), vec![1], vec![s])
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = self.value(a).len() as f64;
        let s = sq_diff_sum(self.value(a), self.value(b));
        Ok(self.push(Op::Mse(a, b), vec![1], vec![s / n]))
    }

    /// Sum of squared differences, `||a - b||²`.
    pub fn sse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sse", a, b)?;
        let s = sq_diff_sum(self.value(a), self.value(b));
        Ok(self.push(Op::Sse(a, b), vec![1], vec![s]))
    }

    /// Drops the last axis by selecting column `col`: `[.., H, W] -> [.., H]`.
    pub fn column(&mut self, input: Var, col: usize) -> Result<Var> {
        let shape = self.shape(input);
        let (&width, lead) = shape
            .split_last()
            .filter(|(_, lead)| !lead.is_empty())
            .ok_or_else(|| Error::invalid("column: input needs rank >= 2"))?;
        if col >= width {
            return Err(Error::invalid(format!("column {col} out of range for width {width}")));
        }
        let out_shape = lead.to_vec();
        let value = self.value(input).chunks_exact(width).map(|row| row[col]).collect();
        Ok(self.push(Op::Column { input, col, width }, out_shape, value))
    }

    /// Resets accumulated gradients on every node.
    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Reverse-mode sweep from a scalar `loss`. Leaf gradients accumulate
    /// across calls until [`Graph::zero_grads`]; intermediates are released.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::NotScalar(self.node(loss).shape.clone()));
        }
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        for (node, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &upstream);
        }
        Ok(())
    }

    fn grad_buf<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
        let node = &nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn propagate(&mut self, i: usize, up: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        match node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                ref geom,
            } => {
                // Disjoint nodes: take the buffers out to borrow them together.
                let mut dx = Self::grad_buf(grads, nodes, input).map(std::mem::take);
                let mut dk = Self::grad_buf(grads, nodes, kernel).map(std::mem::take);
                let mut db = Self::grad_buf(grads, nodes, bias).map(std::mem::take);
                conv::backward(
                    &nodes[input.0].value,
                    &nodes[kernel.0].value,
                    geom,
                    up,
                    dx.as_deref_mut(),
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                );
                for (v, g) in [(input, dx), (kernel, dk), (bias, db)] {
                    if let Some(g) = g {
                        grads[v.0] = Some(g);
                    }
                }
            }
            Op::Relu(x) => {
                let xs = &nodes[x.0].value;
                if let Some(g) = Self::grad_buf(grads, nodes, x) {
                    for ((g, &u), &xv) in g.iter_mut().zip(up).zip(xs) {
                        if xv > 0.0 {
                            *g += u;
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(g) = Self::grad_buf(grads, nodes, a) {
                    add_scaled(g, up, 1.0);
                }
                if let Some(g) = Self::grad_buf(grads, nodes, b) {
                    add_scaled(g, up, sign);
                }
            }
            Op::Scale(x, c) => {
                if let Some(g) = Self::grad_buf(grads, nodes, x) {
                    add_scaled(g, up, c);
                }
            }
            Op::Sum(x) => {
                if let Some(g) = Self::grad_buf(grads, nodes, x) {
                    g.iter_mut().for_each(|v| *v += up[0]);
                }
            }
            Op::Mse(a, b) | Op::Sse(a, b) => {
                let n = nodes[a.0].value.len() as f64;
                let coef = match node.op {
                    Op::Mse(..) => 2.0 * up[0] / n,
                    _ => 2.0 * up[0],
                };
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(g) = Self::grad_buf(grads, nodes, a) {
                    for ((g, x), y) in g.iter_mut().zip(av).zip(bv) {
                        *g += coef * (x - y);
                    }
                }
                if let Some(g) = Self::grad_buf(grads, nodes, b) {
                    for ((g, x), y) in g.iter_mut().zip(av).zip(bv) {
                        *g -= coef * (x - y);
                    }
                }
            }
            Op::Column { input, col, width } => {
                if let Some(g) = Self::grad_buf(grads, nodes, input) {
                    for (row, &u) in g.chunks_exact_mut(width).zip(up) {
                        row[col] += u;
                    }
                }
            }
        }
    }

    /// Folds a leaf's graph gradient into `t.grad` (`+=`). No-op when the
    /// leaf received no gradient.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.grad(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

fn sq_diff_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn add_scaled(dst: &mut [f64], src: &[f64], c: f64) {
    if c == 1.0 {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    } else {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += c * s);
    }
}

/// Central-difference gradient of a scalar function, `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("finite_diff_grad: eps must be > 0"));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    Tensor::new(x.shape.clone(), out)
}

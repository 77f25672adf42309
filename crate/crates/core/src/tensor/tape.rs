use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::ops;
use super::{check_finite, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds, used for diagnostics and for the gradient-corruption hook
/// of the gradient checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    BatchNormTrain,
    BatchNormEval,
    Relu,
    Sigmoid,
    Add,
    Mul,
    MulChannel,
    Concat,
    SliceChannels,
    Upsample,
    MaxPool,
    GlobalAvgPool,
    MatMul,
    Softmax,
    Transpose,
    Reshape,
    Scale,
    DivConst,
    Sum,
    Dice,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNormEval { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulChannel(Var, Var),
    Concat(Vec<Var>),
    SliceChannels { x: Var, start: usize },
    Upsample(Var),
    MaxPool { x: Var, arg: Vec<usize> },
    GlobalAvgPool(Var),
    MatMul(Var, Var),
    Softmax(Var),
    Transpose(Var),
    Reshape(Var),
    Scale(Var, f64),
    DivConst(Var, Arc<Tensor>),
    Sum(Var),
    Dice { pred: Var, gt: Tensor, eps: f64 },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::BatchNormTrain { .. } => OpKind::BatchNormTrain,
            Op::BatchNormEval { .. } => OpKind::BatchNormEval,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::MulChannel(..) => OpKind::MulChannel,
            Op::Concat(_) => OpKind::Concat,
            Op::SliceChannels { .. } => OpKind::SliceChannels,
            Op::Upsample(_) => OpKind::Upsample,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Scale(..) => OpKind::Scale,
            Op::DivConst(..) => OpKind::DivConst,
            Op::Sum(_) => OpKind::Sum,
            Op::Dice { .. } => OpKind::Dice,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Batch statistics from a training-mode batch norm, for running-stat updates.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Number of values per channel the statistics were taken over.
    pub count: usize,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Records operations in execution order and back-propagates through them.
///
/// Single-writer: one training step records onto one tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    corrupt: Option<OpKind>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Perturb the adjoint of every op of `kind`. Exists so the gradient checker
    /// can demonstrate that it catches a wrong backward.
    pub fn set_corruption(&mut self, kind: Option<OpKind>) {
        self.corrupt = kind;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        let kind = op.kind();
        check_finite(op_name(kind), value.data())?;
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(y, Op::Conv2d { x, w, b, stride, pad }, &parents)
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<()> {
        let c = self.shape(x).c;
        let (g, b) = (self.shape(gamma).numel(), self.shape(beta).numel());
        if g != c || b != c {
            return Err(Error::shape(
                "batchnorm",
                format!("input has {c} channels, gamma {g}, beta {b}"),
            ));
        }
        Ok(())
    }

    /// Batch norm using the statistics of `x` over (N, H, W).
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        self.check_bn(x, gamma, beta)?;
        let xt = self.value(x);
        let s = xt.shape();
        let (mean, var) = ops::channel_mean_var(xt);
        let (y, xhat, inv_std) = ops::channel_affine_normalize(
            xt,
            self.value(gamma).data(),
            self.value(beta).data(),
            &mean,
            &var,
            eps,
        );
        let v = self.push(
            Tensor::from_parts(s, y),
            Op::BatchNormTrain { x, gamma, beta, xhat, inv_std },
            &[x, gamma, beta],
        )?;
        Ok((v, BatchStats { mean, var, count: s.n * s.plane() }))
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.check_bn(x, gamma, beta)?;
        let c = self.shape(x).c;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batchnorm", format!("running stats length vs {c} channels")));
        }
        let xt = self.value(x);
        let (y, xhat, inv_std) = ops::channel_affine_normalize(
            xt,
            self.value(gamma).data(),
            self.value(beta).data(),
            mean,
            var,
            eps,
        );
        let s = xt.shape();
        self.push(Tensor::from_parts(s, y), Op::BatchNormEval { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| v.max(0.0))?;
        self.push(y, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(ops::sigmoid)?;
        self.push(y, Op::Sigmoid(x), &[x])
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, format!("{} vs {}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip("add", a, b, |x, y| x + y)?;
        self.push(y, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip("mul", a, b, |x, y| x * y)?;
        self.push(y, Op::Mul(a, b), &[a, b])
    }

    /// Scale each channel plane of `x` (N×C×H×W) by `s` (N×C×1×1).
    pub fn mul_channel(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xs, ss) = (self.shape(x), self.shape(s));
        if ss != Shape::new(xs.n, xs.c, 1, 1) {
            return Err(Error::shape("mul_channel", format!("{} by {}", xs, ss)));
        }
        let sd = self.value(s).data();
        let data = self
            .value(x)
            .data()
            .chunks(xs.plane().max(1))
            .zip(sd)
            .flat_map(|(plane, &k)| plane.iter().map(move |v| v * k))
            .collect();
        self.push(Tensor::from_parts(xs, data), Op::MulChannel(x, s), &[x, s])
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let ts: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let y = ops::concat_channels(&ts)?;
        self.push(y, Op::Concat(xs.to_vec()), xs)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let y = ops::slice_channels(self.value(x), start, len)?;
        self.push(y, Op::SliceChannels { x, start }, &[x])
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let y = ops::upsample_bilinear(self.value(x), factor)?;
        self.push(y, Op::Upsample(x), &[x])
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let (y, arg) = ops::maxpool2d(self.value(x), k, stride, pad)?;
        self.push(y, Op::MaxPool { x, arg }, &[x])
    }

    pub fn global_avgpool(&mut self, x: Var) -> Result<Var> {
        let y = ops::global_avgpool(self.value(x));
        self.push(y, Op::GlobalAvgPool(x), &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::matmul(self.value(a), self.value(b))?;
        self.push(y, Op::MatMul(a, b), &[a, b])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let y = ops::softmax_rows(self.value(x));
        self.push(y, Op::Softmax(x), &[x])
    }

    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let y = ops::transpose_last(self.value(x));
        self.push(y, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        self.push(y, Op::Reshape(x), &[x])
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let y = self.value(x).map(|v| v * k)?;
        self.push(y, Op::Scale(x, k), &[x])
    }

    /// Element-wise division by a constant tensor, either the same shape as `x`
    /// or a single `1×1×H×W` plane broadcast over N and C.
    pub fn div_const(&mut self, x: Var, d: Arc<Tensor>) -> Result<Var> {
        let xs = self.shape(x);
        let ds = d.shape();
        let plane = if ds == xs {
            xs.numel()
        } else if ds == Shape::new(1, 1, xs.h, xs.w) {
            xs.plane()
        } else {
            return Err(Error::shape("div_const", format!("{} by {}", xs, ds)));
        };
        if d.data().iter().any(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("div_const divisor contains zero".into()));
        }
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .flat_map(|c| c.iter().zip(d.data()).map(|(a, b)| a / b))
            .collect();
        self.push(Tensor::from_parts(xs, data), Op::DivConst(x, d), &[x])
    }

    /// Sum of all elements as a 1×1×1×1 tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let y = Tensor::scalar(self.value(x).sum());
        self.push(y, Op::Sum(x), &[x])
    }

    /// Soft Dice loss against a fixed binary target.
    pub fn dice_loss(&mut self, pred: Var, gt: &Tensor, eps: f64) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != gt.shape() {
            return Err(Error::shape("dice_loss", format!("{} vs {}", p.shape(), gt.shape())));
        }
        let y = Tensor::scalar(ops::dice_loss(p.data(), gt.data(), eps));
        self.push(y, Op::Dice { pred, gt: gt.clone(), eps }, &[pred])
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("backward on an empty tape".into()));
        }
        if self.shape(loss) != Shape::scalar() {
            return Err(Error::shape("backward", format!("loss must be 1x1x1x1, got {}", self.shape(loss))));
        }
        if !self.requires_grad(loss) {
            return Err(Error::Detached);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(dy);
                continue;
            }
            let mut contribs = self.adjoint(node, &dy);
            if self.corrupt == Some(node.op.kind()) {
                for (_, g) in contribs.iter_mut() {
                    g.iter_mut().for_each(|v| *v = *v * 1.5 + 1e-3);
                }
            }
            for (v, g) in contribs {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            // Keep the upstream gradient of interior nodes available to callers.
            grads[i] = Some(dy);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::from_parts(self.nodes[i].value.shape(), g)))
            .collect();
        Ok(Gradients { grads })
    }

    fn adjoint(&self, node: &Node, dy: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, stride, pad } => {
                let g = ops::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    *stride,
                    *pad,
                    dy,
                    (want(*x), want(*w), b.is_some_and(|b| want(b))),
                );
                let mut out = Vec::new();
                if let Some(dx) = g.dx {
                    out.push((*x, dx));
                }
                if let Some(dw) = g.dw {
                    out.push((*w, dw));
                }
                if let (Some(b), Some(db)) = (b, g.db) {
                    out.push((*b, db));
                }
                out
            }
            Op::BatchNormTrain { x, gamma, beta, xhat, inv_std } => {
                let (dx, dg, db) = ops::batchnorm_train_backward(
                    self.shape(*x),
                    xhat,
                    inv_std,
                    self.value(*gamma).data(),
                    dy,
                );
                vec![(*x, dx), (*gamma, dg), (*beta, db)]
            }
            Op::BatchNormEval { x, gamma, beta, xhat, inv_std } => {
                let s = self.shape(*x);
                let gm = self.value(*gamma).data();
                let mut dx = vec![0.0; s.numel()];
                let mut dg = vec![0.0; s.c];
                let mut db = vec![0.0; s.c];
                for n in 0..s.n {
                    for c in 0..s.c {
                        let off = (n * s.c + c) * s.plane();
                        for i in off..off + s.plane() {
                            dx[i] = dy[i] * gm[c] * inv_std[c];
                            dg[c] += dy[i] * xhat[i];
                            db[c] += dy[i];
                        }
                    }
                }
                vec![(*x, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                vec![(*x, dy.iter().zip(xd).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect())]
            }
            Op::Sigmoid(x) => {
                let yd = node.value.data();
                vec![(*x, dy.iter().zip(yd).map(|(g, y)| g * y * (1.0 - y)).collect())]
            }
            Op::Add(a, b) => vec![(*a, dy.to_vec()), (*b, dy.to_vec())],
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, dy.iter().zip(bd).map(|(g, v)| g * v).collect()),
                    (*b, dy.iter().zip(ad).map(|(g, v)| g * v).collect()),
                ]
            }
            Op::MulChannel(x, s) => {
                let xs = self.shape(*x);
                let plane = xs.plane().max(1);
                let sd = self.value(*s).data();
                let xd = self.value(*x).data();
                let dx = dy
                    .chunks(plane)
                    .zip(sd)
                    .flat_map(|(g, &k)| g.iter().map(move |v| v * k))
                    .collect();
                let ds = dy
                    .chunks(plane)
                    .zip(xd.chunks(plane))
                    .map(|(g, v)| g.iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect();
                vec![(*x, dx), (*s, ds)]
            }
            Op::Concat(xs) => {
                let s = node.value.shape();
                let mut out: Vec<(Var, Vec<f64>)> =
                    xs.iter().map(|&v| (v, Vec::with_capacity(self.shape(v).numel()))).collect();
                for n in 0..s.n {
                    let mut off = n * s.chw();
                    for (v, g) in out.iter_mut() {
                        let len = self.shape(*v).chw();
                        g.extend_from_slice(&dy[off..off + len]);
                        off += len;
                    }
                }
                out
            }
            Op::SliceChannels { x, start } => {
                let xs = self.shape(*x);
                let len = node.value.shape().c;
                let mut dx = vec![0.0; xs.numel()];
                for n in 0..xs.n {
                    let dst = (n * xs.c + start) * xs.plane();
                    let src = n * len * xs.plane();
                    dx[dst..dst + len * xs.plane()].copy_from_slice(&dy[src..src + len * xs.plane()]);
                }
                vec![(*x, dx)]
            }
            Op::Upsample(x) => {
                let s = node.value.shape();
                vec![(*x, ops::resize_bilinear_backward(self.shape(*x), s.h, s.w, dy))]
            }
            Op::MaxPool { x, arg } => {
                let xs = self.shape(*x);
                let ys = node.value.shape();
                let mut dx = vec![0.0; xs.numel()];
                for p in 0..xs.n * xs.c {
                    for o in 0..ys.plane() {
                        let j = p * ys.plane() + o;
                        dx[p * xs.plane() + arg[j]] += dy[j];
                    }
                }
                vec![(*x, dx)]
            }
            Op::GlobalAvgPool(x) => {
                let xs = self.shape(*x);
                let inv = 1.0 / xs.plane() as f64;
                let dx = dy.iter().flat_map(|g| std::iter::repeat_n(g * inv, xs.plane())).collect();
                vec![(*x, dx)]
            }
            Op::MatMul(a, b) => {
                let (da, db) = ops::matmul_backward(self.value(*a), self.value(*b), dy, (want(*a), want(*b)));
                da.map(|g| (*a, g)).into_iter().chain(db.map(|g| (*b, g))).collect()
            }
            Op::Softmax(x) => vec![(*x, ops::softmax_rows_backward(&node.value, dy))],
            Op::Transpose(x) => {
                let t = Tensor::from_parts(node.value.shape(), dy.to_vec());
                vec![(*x, ops::transpose_last(&t).into_vec())]
            }
            Op::Reshape(x) => vec![(*x, dy.to_vec())],
            Op::Scale(x, k) => vec![(*x, dy.iter().map(|g| g * k).collect())],
            Op::DivConst(x, d) => {
                let plane = d.shape().numel();
                vec![(*x, dy.chunks(plane).flat_map(|c| c.iter().zip(d.data()).map(|(g, v)| g / v)).collect())]
            }
            Op::Sum(x) => vec![(*x, vec![dy[0]; self.shape(*x).numel()])],
            Op::Dice { pred, gt, eps } => {
                vec![(*pred, ops::dice_backward(self.value(*pred).data(), gt.data(), *eps, dy[0]))]
            }
        }
    }
}

fn op_name(kind: OpKind) -> &'static str {
    match kind {
        OpKind::Leaf => "leaf",
        OpKind::Conv2d => "conv2d",
        OpKind::BatchNormTrain | OpKind::BatchNormEval => "batchnorm",
        OpKind::Relu => "relu",
        OpKind::Sigmoid => "sigmoid",
        OpKind::Add => "add",
        OpKind::Mul => "mul",
        OpKind::MulChannel => "mul_channel",
        OpKind::Concat => "concat_channels",
        OpKind::SliceChannels => "slice_channels",
        OpKind::Upsample => "upsample",
        OpKind::MaxPool => "maxpool2d",
        OpKind::GlobalAvgPool => "global_avgpool",
        OpKind::MatMul => "matmul",
        OpKind::Softmax => "softmax_rows",
        OpKind::Transpose => "transpose",
        OpKind::Reshape => "reshape",
        OpKind::Scale => "scale",
        OpKind::DivConst => "div_const",
        OpKind::Sum => "sum",
        OpKind::Dice => "dice_loss",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(Shape::new(1, 2, 2, 2), (0..8).map(f64::from).collect()).unwrap(), true);
        let l = tape.sum(x).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn square_via_shared_operand() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap(), true);
        let sq = tape.mul(x, x).unwrap();
        let l = tape.sum(sq).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn detached_graph_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(3.0));
        let l = tape.sum(x).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::Detached)));
        let empty = Tape::new();
        assert!(empty.backward(Var(0)).is_err());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 2)), true);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn batchnorm_train_direct_formula() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(Shape::new(1, 1, 1, 2), vec![0.0, 2.0]).unwrap(), true);
        let g = tape.constant(Tensor::scalar(1.0));
        let b = tape.constant(Tensor::scalar(0.0));
        let (y, stats) = tape.batchnorm_train(x, g, b, 1e-5).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.var, vec![1.0]);
        let y = tape.value(y).data();
        assert!((y[0] + 1.0).abs() < 1e-5 && (y[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn batchnorm_constant_channel_and_eval_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(2, 1, 3, 3), 7.0), true);
        let g = tape.constant(Tensor::scalar(2.0));
        let b = tape.constant(Tensor::scalar(0.5));
        let (y, _) = tape.batchnorm_train(x, g, b, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.5));

        let data: Vec<f64> = (0..18).map(|i| i as f64 * 0.3 - 2.0).collect();
        let x = tape.leaf(Tensor::new(Shape::new(2, 1, 3, 3), data.clone()).unwrap(), false);
        let g = tape.constant(Tensor::scalar(1.0));
        let b = tape.constant(Tensor::scalar(0.0));
        let y = tape.batchnorm_eval(x, g, b, &[0.0], &[1.0], 1e-5).unwrap();
        for (a, b) in tape.value(y).data().iter().zip(&data) {
            assert!((a - b).abs() < 1e-4);
        }
        let g2 = tape.constant(Tensor::new(Shape::new(1, 2, 1, 1), vec![1.0, 1.0]).unwrap());
        assert!(tape.batchnorm_eval(x, g2, b, &[0.0], &[1.0], 1e-5).is_err());
    }

    #[test]
    fn elementwise_contracts() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]).unwrap(), true);
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s).item(), 0.5);
        let y = tape.constant(Tensor::zeros(Shape::new(1, 1, 1, 2)));
        assert!(tape.add(x, y).is_err());
        assert!(tape.mul(x, y).is_err());
        // ReLU subgradient at zero is zero.
        let l = tape.sum(r).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1e300), true);
        assert!(matches!(tape.mul(x, x), Err(Error::NonFinite { op: "mul" })));
    }
}

use std::sync::atomic::{AtomicU64, Ordering};

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::nn::{self, Padding};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapeMode {
    Recording,
    Frozen,
}

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    Sum(usize),
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool2 {
        x: usize,
        argmax: Vec<u32>,
    },
    Upsample2(usize),
    Tile(usize),
    Concat(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Bce {
        pred: usize,
        target: Vec<T>,
    },
    CosineMap(usize, usize),
    ScaleChannels(usize, usize),
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Sum(_) => "sum",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2 { .. } => "maxpool2x2",
            Op::Upsample2(_) => "upsample_nearest2x",
            Op::Tile(_) => "tile_spatial",
            Op::Concat(..) => "concat_channels",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Bce { .. } => "bce_loss",
            Op::CosineMap(..) => "cosine_map",
            Op::ScaleChannels(..) => "scale_channels",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of executed ops. Backward walks it once, in reverse.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    mode: TapeMode,
    fault: Option<&'static str>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            mode: TapeMode::Recording,
            fault: None,
        }
    }

    pub fn mode(&self) -> TapeMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Test hook: scales every gradient emitted by the named op's backward
    /// rule so gradient checks can prove they catch a broken rule.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, op: &'static str) {
        self.fault = Some(op);
    }

    /// Records a constant input (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Records a differentiable leaf.
    pub fn variable(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Copies a parameter tensor onto the tape as a differentiable leaf.
    pub fn param(&mut self, p: &Tensor<T>) -> Result<Var> {
        let copy = Tensor::new(p.shape().to_vec(), p.data().to_vec())?;
        self.leaf(copy, true)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(v.index)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let i = self.check(v).expect("var belongs to this tape");
        &self.nodes[i].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor<T>> {
        let i = self.check(v)?;
        Ok(&self.nodes[i].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v)
            .map(|i| self.nodes[i].requires_grad)
            .unwrap_or(false)
    }

    /// Gradient of the last `backward` call with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        let i = self.check(v).ok()?;
        self.grads.get(i)?.as_deref()
    }

    pub(crate) fn resolve(&self, v: Var) -> Result<(usize, &Tensor<T>)> {
        let i = self.check(v)?;
        Ok((i, &self.nodes[i].value))
    }

    pub(crate) fn record(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Add(a, b) | Op::Mul(a, b) | Op::Concat(a, b) => self.rg(*a) || self.rg(*b),
            Op::CosineMap(a, b) | Op::ScaleChannels(a, b) => self.rg(*a) || self.rg(*b),
            Op::Conv2d { x, w, b, .. } => self.rg(*x) || self.rg(*w) || self.rg(*b),
            Op::Sum(x)
            | Op::Upsample2(x)
            | Op::Tile(x)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x) => self.rg(*x),
            Op::MaxPool2 { x, .. } => self.rg(*x),
            Op::Bce { pred, .. } => self.rg(*pred),
        };
        self.push(value, op, requires_grad)
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if self.mode == TapeMode::Frozen {
            return Err(Error::TapeFrozen);
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ta) = self.resolve(a)?;
        let (ib, tb) = self.resolve(b)?;
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                expected: ta.shape().to_vec(),
                actual: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| *x + *y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.record(out, Op::Add(ia, ib))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ta) = self.resolve(a)?;
        let (ib, tb) = self.resolve(b)?;
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                expected: ta.shape().to_vec(),
                actual: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| *x * *y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.record(out, Op::Mul(ia, ib))
    }

    /// Reduces to a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let out = Tensor::scalar(tx.sum());
        self.record(out, Op::Sum(ix))
    }

    /// Fills gradient buffers for every differentiable node reachable from
    /// `loss`. The tape is frozen afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = self.check(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::NotScalar(self.nodes[root].value.shape().to_vec()));
        }
        self.mode = TapeMode::Frozen;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[root] = Some(vec![T::one()]);

        for idx in (0..=root).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(gout);
                continue;
            }
            let contributions = self.node_backward(idx, &gout);
            let op_name = node.op.name();
            let scale = if self.fault == Some(op_name) {
                T::lit(1.5)
            } else {
                T::one()
            };
            for (input, mut g) in contributions {
                if !self.nodes[input].requires_grad {
                    continue;
                }
                if scale != T::one() {
                    g.iter_mut().for_each(|v| *v = *v * scale);
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { op: op_name });
                }
                match grads[input].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a = *a + *d),
                    None => grads[input] = Some(g),
                }
            }
            grads[idx] = Some(gout);
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(&self, idx: usize, gout: &[T]) -> Vec<(usize, Vec<T>)> {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        let needs = |i: usize| self.nodes[i].requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, gout.to_vec()), (*b, gout.to_vec())],
            Op::Mul(a, b) => {
                let ga = gout.iter().zip(val(*b).data()).map(|(g, y)| *g * *y).collect();
                let gb = gout.iter().zip(val(*a).data()).map(|(g, x)| *g * *x).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::Sum(x) => vec![(*x, vec![gout[0]; val(*x).len()])],
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let grads = nn::conv::backward(
                    val(*x),
                    val(*w),
                    gout,
                    *stride,
                    *padding,
                    needs(*x),
                    needs(*w),
                );
                let mut out = Vec::with_capacity(3);
                if let Some(gx) = grads.input {
                    out.push((*x, gx));
                }
                if let Some(gw) = grads.weight {
                    out.push((*w, gw));
                }
                out.push((*b, grads.bias));
                out
            }
            Op::MaxPool2 { x, argmax } => {
                vec![(*x, nn::pool::maxpool_backward(val(*x).len(), argmax, gout))]
            }
            Op::Upsample2(x) => vec![(*x, nn::pool::upsample_backward(val(*x), gout))],
            Op::Tile(z) => vec![(*z, nn::shape::tile_backward(val(*z).len(), gout))],
            Op::Concat(a, b) => {
                let (ga, gb) = nn::shape::concat_backward(val(*a), val(*b), gout);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Relu(x) => vec![(*x, nn::activation::relu_backward(val(*x), gout))],
            Op::Sigmoid(x) => vec![(*x, nn::activation::sigmoid_backward(&node.value, gout))],
            Op::Tanh(x) => vec![(*x, nn::activation::tanh_backward(&node.value, gout))],
            Op::Bce { pred, target } => {
                vec![(*pred, nn::loss::bce_backward(val(*pred), target, gout[0]))]
            }
            Op::CosineMap(f, v) => {
                let (gf, gv) = nn::similarity::cosine_map_backward(val(*f), val(*v), gout);
                vec![(*f, gf), (*v, gv)]
            }
            Op::ScaleChannels(f, m) => {
                let (gf, gm) = nn::similarity::scale_channels_backward(val(*f), val(*m), gout);
                vec![(*f, gf), (*m, gm)]
            }
        }
    }
}

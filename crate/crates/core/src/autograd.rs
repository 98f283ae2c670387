//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`]s in execution order.
//! [`Tape::backward`] replays the record in reverse, accumulating gradients
//! additively where a value fans out to several consumers. A tape built with
//! [`Tape::inference`] records nothing: values are freed as soon as their
//! `Var`s drop, which keeps memory flat for large forward passes.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::tensor::kernels;
use crate::tensor::{Result, Shape, Tensor, TensorError};

type NodeId = usize;

enum Op {
    Leaf,
    Add,
    Sub,
    Mul {
        a: Rc<Tensor>,
        b: Rc<Tensor>,
    },
    Scale(f64),
    ChannelScale {
        x: Rc<Tensor>,
        v: Rc<Tensor>,
    },
    Conv2d {
        x: Rc<Tensor>,
        w: Rc<Tensor>,
        stride: usize,
        padding: usize,
        groups: usize,
        has_bias: bool,
    },
    LayerNorm {
        normalized: Tensor,
        inv_std: Vec<f64>,
        scale: Rc<Tensor>,
    },
    SoftmaxRows {
        y: Rc<Tensor>,
    },
    RowAttention {
        q_left: Rc<Tensor>,
        q_right: Rc<Tensor>,
        v: Rc<Tensor>,
        weights: Vec<f64>,
    },
    PixelShuffle(usize),
    PixelUnshuffle(usize),
    GlobalAvgPool(Shape),
    NarrowChannels {
        input: Shape,
        start: usize,
    },
    PadReplicate {
        input: Shape,
        pad: usize,
    },
    RepeatBatch(Shape),
    Sum(Shape),
}

struct Node {
    op: Op,
    parents: Vec<Option<NodeId>>,
}

/// Records operations for reverse-mode differentiation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    recording: bool,
    consumed: Cell<bool>,
    macs: Cell<u64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A tape that records operations for [`Tape::backward`].
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            consumed: Cell::new(false),
            macs: Cell::new(0),
        }
    }

    /// A tape that only evaluates; `backward` is unavailable.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply-accumulates performed by convolutions and attention products
    /// evaluated through this tape so far.
    pub fn macs(&self) -> u64 {
        self.macs.get()
    }

    fn count_macs(&self, n: u64) {
        self.macs.set(self.macs.get() + n);
    }

    /// A differentiable input. On an inference tape this is a constant.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let node = self.recording.then(|| self.push(Op::Leaf, Vec::new()));
        Var {
            tape: self,
            value: Rc::new(value),
            node,
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        Var {
            tape: self,
            value: Rc::new(value),
            node: None,
        }
    }

    fn push(&self, op: Op, parents: Vec<Option<NodeId>>) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, parents });
        nodes.len() - 1
    }

    /// Wraps a computed value, recording `op` only if some parent is tracked.
    fn record<'t>(&'t self, value: Tensor, parents: &[&Var<'t>], op: impl FnOnce() -> Op) -> Var<'t> {
        let ids: Vec<Option<NodeId>> = parents.iter().map(|p| p.node).collect();
        let node = (self.recording && ids.iter().any(Option::is_some)).then(|| self.push(op(), ids));
        Var {
            tape: self,
            value: Rc::new(value),
            node,
        }
    }

    /// Reverse pass from a scalar `loss`. Can run once per tape.
    pub fn backward(&self, loss: &Var<'_>) -> Result<Gradients> {
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        if loss.shape() != Shape::scalar() {
            return Err(TensorError::NonScalarLoss(loss.shape()));
        }
        let root = loss.node.ok_or(TensorError::NotRecorded)?;
        self.consumed.set(true);
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root] = Some(Tensor::scalar(1.0));
        for id in (0..=root).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let parent_grads = node_backward(&node.op, &g)?;
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                if let (Some(pid), Some(pg)) = (parent, pg) {
                    match &mut grads[*pid] {
                        Some(acc) => acc.add_assign(&pg)?,
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn node_backward(op: &Op, g: &Tensor) -> Result<Vec<Option<Tensor>>> {
    Ok(match op {
        Op::Leaf => Vec::new(),
        Op::Add => vec![Some(g.clone()), Some(g.clone())],
        Op::Sub => vec![Some(g.clone()), Some(g.map(|v| -v))],
        Op::Mul { a, b } => vec![Some(kernels::mul(g, b)?), Some(kernels::mul(g, a)?)],
        Op::Scale(s) => vec![Some(g.map(|v| v * s))],
        Op::ChannelScale { x, v } => {
            let (gx, gv) = kernels::channel_scale_backward(x, v, g)?;
            vec![Some(gx), Some(gv)]
        }
        Op::Conv2d {
            x,
            w,
            stride,
            padding,
            groups,
            has_bias,
        } => {
            let (gx, gw, gb) = kernels::conv2d_backward(x, w, g, *stride, *padding, *groups)?;
            let mut out = vec![Some(gx), Some(gw)];
            if *has_bias {
                out.push(Some(gb));
            }
            out
        }
        Op::LayerNorm {
            normalized,
            inv_std,
            scale,
        } => {
            let (gx, gs, gb) = kernels::layer_norm_backward(normalized, inv_std, scale, g);
            vec![Some(gx), Some(gs), Some(gb)]
        }
        Op::SoftmaxRows { y } => vec![Some(kernels::softmax_rows_backward(y, g))],
        Op::RowAttention {
            q_left,
            q_right,
            v,
            weights,
        } => {
            let (a, b, c) = kernels::row_attention_backward(q_left, q_right, v, weights, g)?;
            vec![Some(a), Some(b), Some(c)]
        }
        Op::PixelShuffle(r) => vec![Some(kernels::pixel_unshuffle(g, *r)?)],
        Op::PixelUnshuffle(r) => vec![Some(kernels::pixel_shuffle(g, *r)?)],
        Op::GlobalAvgPool(shape) => vec![Some(kernels::global_avg_pool_backward(*shape, g))],
        Op::NarrowChannels { input, start } => {
            let mut gx = Tensor::zeros(*input);
            let len = g.shape().c;
            let p = input.plane();
            for n in 0..input.n {
                let dst = (n * input.c + start) * p;
                let src = n * len * p;
                gx.data_mut()[dst..dst + len * p].copy_from_slice(&g.data()[src..src + len * p]);
            }
            vec![Some(gx)]
        }
        Op::PadReplicate { input, pad } => vec![Some(kernels::pad_replicate_backward(*input, *pad, g))],
        Op::RepeatBatch(shape) => vec![Some(kernels::repeat_batch_backward(*shape, g))],
        Op::Sum(shape) => vec![Some(Tensor::full(*shape, g.data()[0]))],
    })
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when `var` is
    /// untracked or does not influence the loss.
    pub fn wrt(&self, var: &Var<'_>) -> Tensor {
        var.node
            .and_then(|id| self.grads.get(id).cloned().flatten())
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

/// A tensor value flowing through a [`Tape`].
#[derive(Clone)]
pub struct Var<'t> {
    tape: &'t Tape,
    value: Rc<Tensor>,
    node: Option<NodeId>,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.value.shape())
            .field("node", &self.node)
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Whether gradients flow back through this value.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let out = kernels::add(&self.value, &other.value)?;
        Ok(self.tape.record(out, &[self, other], || Op::Add))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let out = kernels::sub(&self.value, &other.value)?;
        Ok(self.tape.record(out, &[self, other], || Op::Sub))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let out = kernels::mul(&self.value, &other.value)?;
        Ok(self.tape.record(out, &[self, other], || Op::Mul {
            a: self.value.clone(),
            b: other.value.clone(),
        }))
    }

    /// Multiplication by a constant scalar.
    pub fn scale(&self, s: f64) -> Var<'t> {
        let out = self.value.map(|v| v * s);
        self.tape.record(out, &[self], || Op::Scale(s))
    }

    /// Multiplication by a `[1 | n, 1 | c, 1, 1]` factor broadcast over the
    /// remaining axes (per-channel scale, per-sample channel attention, or a
    /// single trainable scalar).
    pub fn channel_scale(&self, factor: &Var<'t>) -> Result<Var<'t>> {
        let out = kernels::channel_scale(&self.value, &factor.value)?;
        Ok(self.tape.record(out, &[self, factor], || Op::ChannelScale {
            x: self.value.clone(),
            v: factor.value.clone(),
        }))
    }

    pub fn conv2d(
        &self,
        weight: &Var<'t>,
        bias: Option<&Var<'t>>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var<'t>> {
        let out = kernels::conv2d(&self.value, &weight.value, bias.map(|b| &*b.value), stride, padding, groups)?;
        let geom = kernels::ConvGeometry::new(self.shape(), weight.shape(), stride, padding, groups)?;
        self.tape.count_macs(geom.macs());
        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.tape.record(out, &parents, || Op::Conv2d {
            x: self.value.clone(),
            w: weight.value.clone(),
            stride,
            padding,
            groups,
            has_bias: bias.is_some(),
        }))
    }

    /// Channel-axis layer normalization; see [`kernels::layer_norm`].
    pub fn layer_norm(&self, scale: &Var<'t>, shift: &Var<'t>, eps: f64) -> Result<Var<'t>> {
        let out = kernels::layer_norm(&self.value, &scale.value, &shift.value, eps)?;
        let kernels::LayerNormOutput {
            output,
            normalized,
            inv_std,
        } = out;
        Ok(self.tape.record(output, &[self, scale, shift], || Op::LayerNorm {
            normalized,
            inv_std,
            scale: scale.value.clone(),
        }))
    }

    pub fn softmax_rows(&self) -> Var<'t> {
        let out = Rc::new(kernels::softmax_rows(&self.value));
        let ids = vec![self.node];
        let node = (self.tape.recording && self.node.is_some())
            .then(|| self.tape.push(Op::SoftmaxRows { y: out.clone() }, ids));
        Var {
            tape: self.tape,
            value: out,
            node,
        }
    }

    pub fn pixel_shuffle(&self, r: usize) -> Result<Var<'t>> {
        let out = kernels::pixel_shuffle(&self.value, r)?;
        Ok(self.tape.record(out, &[self], || Op::PixelShuffle(r)))
    }

    pub fn pixel_unshuffle(&self, r: usize) -> Result<Var<'t>> {
        let out = kernels::pixel_unshuffle(&self.value, r)?;
        Ok(self.tape.record(out, &[self], || Op::PixelUnshuffle(r)))
    }

    pub fn global_avg_pool(&self) -> Var<'t> {
        let out = kernels::global_avg_pool(&self.value);
        let shape = self.shape();
        self.tape.record(out, &[self], || Op::GlobalAvgPool(shape))
    }

    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let out = self.value.narrow_channels(start, len)?;
        let input = self.shape();
        Ok(self.tape.record(out, &[self], || Op::NarrowChannels { input, start }))
    }

    pub fn pad_replicate(&self, pad: usize) -> Var<'t> {
        let out = kernels::pad_replicate(&self.value, pad);
        let input = self.shape();
        self.tape.record(out, &[self], || Op::PadReplicate { input, pad })
    }

    pub fn repeat_batch(&self, times: usize) -> Var<'t> {
        let out = kernels::repeat_batch(&self.value, times);
        let shape = self.shape();
        self.tape.record(out, &[self], || Op::RepeatBatch(shape))
    }

    /// Sum of all elements as a `[1, 1, 1, 1]` scalar.
    pub fn sum(&self) -> Var<'t> {
        let out = Tensor::scalar(self.value.sum());
        let shape = self.shape();
        self.tape.record(out, &[self], || Op::Sum(shape))
    }

    pub fn mean(&self) -> Var<'t> {
        self.sum().scale(1.0 / self.value.len() as f64)
    }
}

/// `softmax(q_left q_right^T / sqrt(c)) v` independently for every image
/// row; see [`kernels::row_attention`].
pub fn row_attention<'t>(q_left: &Var<'t>, q_right: &Var<'t>, v: &Var<'t>) -> Result<Var<'t>> {
    let tape = q_left.tape;
    let parents = [q_left, q_right, v];
    let keep = tape.recording && parents.iter().any(|p| p.node.is_some());
    let out = kernels::row_attention(&q_left.value, &q_right.value, &v.value, keep)?;
    let s = q_left.shape();
    tape.count_macs((2 * s.n * s.h * s.w * s.w * s.c) as u64);
    Ok(tape.record(out.output, &parents, || Op::RowAttention {
        q_left: q_left.value.clone(),
        q_right: q_right.value.clone(),
        v: v.value.clone(),
        weights: out.weights,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec([1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap());
        let g = tape.backward(&x.sum()).unwrap();
        assert_eq!(g.wrt(&x), Tensor::ones([1, 2, 2, 2]));
    }

    #[test]
    fn square_gradient_is_two_x() {
        let tape = Tape::new();
        let data: Vec<f64> = vec![0.5, -1.0, 2.0, 3.5];
        let x = tape.leaf(Tensor::from_vec([1, 1, 2, 2], data.clone()).unwrap());
        let g = tape.backward(&x.mul(&x).unwrap().sum()).unwrap();
        let expect: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(g.wrt(&x).data(), &expect[..]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones([1, 1, 2, 2]));
        let unused = tape.leaf(Tensor::ones([1, 3, 1, 1]));
        let g = tape.backward(&x.sum()).unwrap();
        assert_eq!(g.wrt(&unused), Tensor::zeros([1, 3, 1, 1]));
    }

    #[test]
    fn backward_errors() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones([1, 1, 2, 2]));
        assert!(matches!(tape.backward(&x.scale(2.0)), Err(TensorError::NonScalarLoss(_))));
        let loss = x.sum();
        tape.backward(&loss).unwrap();
        assert!(matches!(tape.backward(&loss), Err(TensorError::TapeConsumed)));
    }

    #[test]
    fn inference_tape_records_nothing() {
        let tape = Tape::inference();
        let x = tape.leaf(Tensor::ones([1, 1, 2, 2]));
        let y = x.mul(&x).unwrap().sum();
        assert!(tape.is_empty());
        assert!(!y.requires_grad());
        assert!(matches!(tape.backward(&y), Err(TensorError::NotRecorded)));
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::full([1, 1, 1, 2], 3.0));
        let y = x.add(&x).unwrap().add(&x.scale(4.0)).unwrap().sum();
        assert_eq!(tape.backward(&y).unwrap().wrt(&x).data(), &[6.0, 6.0]);
    }
}

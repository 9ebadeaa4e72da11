//! Tape-based reverse-mode differentiation.
//!
//! Values are computed eagerly as nodes are recorded. [`Graph::backward`]
//! walks the tape once in reverse and returns gradients for every parameter
//! and every gradient-tracking leaf. A graph is built per forward pass and
//! dropped afterwards.

use super::kernels::{self, ConvGeometry};
use super::params::{ParamGrads, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    /// Gradient-tracking input.
    Leaf,
    /// Input that never receives a gradient.
    Constant,
    Param(ParamId),
    Conv1d {
        input: NodeId,
        kernels: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeometry,
    },
    MaxPool1d {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Relu(NodeId),
    Linear {
        input: NodeId,
        weights: NodeId,
        bias: Option<NodeId>,
    },
    Reshape(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    SquaredNorm(NodeId),
    Norm(NodeId),
    Exp(NodeId),
    Abs(NodeId),
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
    tracks_grad: bool,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: ParamGrads,
}

impl Gradients {
    /// Gradient reaching `node`, if any flowed there.
    pub fn node(&self, node: NodeId) -> Option<&Tensor> {
        self.nodes.get(node.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}

static NO_PARAMS: ParamStore = ParamStore::empty();

/// A recorded computation over a borrowed parameter store.
#[derive(Debug)]
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Graph::new(&NO_PARAMS)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Option<Tensor>, tracks_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            tracks_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "node {} was not recorded on this graph ({} nodes)",
                id.0,
                self.nodes.len()
            )))
        }
    }

    fn tracks(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracks_grad
    }

    /// Forward value of a recorded node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (_, Some(v)) => v,
            (Op::Param(p), None) => self.params.get(*p),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    /// Records a gradient-tracking input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, Some(value), true)
    }

    /// Records an input that is treated as constant by backward.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, Some(value), false)
    }

    /// Node for a stored parameter. Repeated calls return the same node so
    /// shared weights accumulate a single gradient.
    pub fn param(&mut self, id: ParamId) -> Result<NodeId> {
        let slot = self.param_nodes.get(id.index()).copied().ok_or_else(|| {
            Error::Usage(format!(
                "parameter {} not in store of {}",
                id.index(),
                self.params.len()
            ))
        })?;
        if let Some(node) = slot {
            return Ok(node);
        }
        let node = self.push(Op::Param(id), None, true);
        self.param_nodes[id.index()] = Some(node);
        Ok(node)
    }

    pub fn conv1d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeometry,
    ) -> Result<NodeId> {
        self.check(input)?;
        self.check(kernels)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let value = kernels::conv1d_forward(
            self.value(input),
            self.value(kernels),
            bias.map(|b| self.value(b)),
            geom,
        )?;
        let tracks =
            self.tracks(input) || self.tracks(kernels) || bias.is_some_and(|b| self.tracks(b));
        Ok(self.push(
            Op::Conv1d {
                input,
                kernels,
                bias,
                geom,
            },
            Some(value),
            tracks,
        ))
    }

    pub fn maxpool1d(&mut self, input: NodeId, window: usize) -> Result<NodeId> {
        self.check(input)?;
        let (value, argmax) = kernels::maxpool1d_forward(self.value(input), window)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::MaxPool1d { input, argmax }, Some(value), tracks))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let src = self.value(input);
        let data = src.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::Relu(input), Some(value), tracks))
    }

    pub fn linear(
        &mut self,
        input: NodeId,
        weights: NodeId,
        bias: Option<NodeId>,
    ) -> Result<NodeId> {
        self.check(input)?;
        self.check(weights)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let value =
            kernels::linear_forward(self.value(input), self.value(weights), bias.map(|b| self.value(b)))?;
        let tracks =
            self.tracks(input) || self.tracks(weights) || bias.is_some_and(|b| self.tracks(b));
        Ok(self.push(
            Op::Linear {
                input,
                weights,
                bias,
            },
            Some(value),
            tracks,
        ))
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.check(input)?;
        let value = self.value(input).reshaped(shape)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::Reshape(input), Some(value), tracks))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Config(format!(
                "element-wise shapes differ: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.binary(a, b, |x, y| x + y)?;
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(Op::Add(a, b), Some(value), tracks))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.binary(a, b, |x, y| x - y)?;
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(Op::Sub(a, b), Some(value), tracks))
    }

    fn unary(&mut self, input: NodeId, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        self.check(input)?;
        let src = self.value(input);
        Tensor::new(src.shape().to_vec(), src.data().iter().map(|v| f(*v)).collect())
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.unary(input, |v| v * factor)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::Scale(input, factor), Some(value), tracks))
    }

    pub fn add_scalar(&mut self, input: NodeId, offset: f64) -> Result<NodeId> {
        let value = self.unary(input, |v| v + offset)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::AddScalar(input), Some(value), tracks))
    }

    pub fn exp(&mut self, input: NodeId) -> Result<NodeId> {
        let value = self.unary(input, f64::exp)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::Exp(input), Some(value), tracks))
    }

    pub fn abs(&mut self, input: NodeId) -> Result<NodeId> {
        let value = self.unary(input, f64::abs)?;
        let tracks = self.tracks(input);
        Ok(self.push(Op::Abs(input), Some(value), tracks))
    }

    /// `‖x‖²` as a one-element tensor.
    pub fn squared_norm(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let s = self.value(input).data().iter().map(|v| v * v).sum();
        let tracks = self.tracks(input);
        Ok(self.push(Op::SquaredNorm(input), Some(Tensor::scalar(s)), tracks))
    }

    /// `‖x‖` as a one-element tensor. The gradient at the origin is taken as zero.
    pub fn norm(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let s = self.value(input).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let tracks = self.tracks(input);
        Ok(self.push(Op::Norm(input), Some(Tensor::scalar(s)), tracks))
    }

    /// Sum of same-shaped nodes.
    pub fn sum(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Usage("sum of zero nodes".into()))?;
        self.check(first)?;
        let mut acc = self.value(first).clone();
        for &id in &inputs[1..] {
            self.check(id)?;
            let v = self.value(id);
            if v.shape() != acc.shape() {
                return Err(Error::Config(format!(
                    "sum operands differ in shape: {:?} vs {:?}",
                    acc.shape(),
                    v.shape()
                )));
            }
            acc.add_assign(v);
        }
        let tracks = inputs.iter().any(|&i| self.tracks(i));
        Ok(self.push(Op::Sum(inputs.to_vec()), Some(acc), tracks))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss)?;
        let v = self.value(loss);
        if v.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.0,
                v.shape()
            )));
        }
        self.backward_seeded(loss, Tensor::new(v.shape().to_vec(), vec![1.0])?)
    }

    /// Reverse pass from `output` with an explicit upstream gradient.
    pub fn backward_seeded(&self, output: NodeId, seed: Tensor) -> Result<Gradients> {
        self.check(output)?;
        if seed.shape() != self.value(output).shape() {
            return Err(Error::Usage(format!(
                "seed gradient shape {:?} does not match node shape {:?}",
                seed.shape(),
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(seed);
        let mut params = ParamGrads::zeros_like(self.params);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracks_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            if let Op::Param(p) = node.op {
                params.accumulate(p, &g);
            }
            grads[idx] = Some(g);
        }
        // Parameter gradients live in `params`; drop their node copies.
        for (idx, node) in self.nodes.iter().enumerate().take(grads.len()) {
            if matches!(node.op, Op::Param(_)) {
                grads[idx] = None;
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |id: NodeId, delta: Tensor| {
            if !self.nodes[id.0].tracks_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let scalar = |t: &Tensor| t.data()[0];
        match &node.op {
            Op::Leaf | Op::Constant | Op::Param(_) => {}
            Op::Conv1d {
                input,
                kernels,
                bias,
                geom,
            } => {
                let (dx, dw, db) = kernels::conv1d_backward(
                    self.value(*input),
                    self.value(*kernels),
                    *geom,
                    g,
                    self.tracks(*input),
                )?;
                if let Some(dx) = dx {
                    send(*input, dx);
                }
                send(*kernels, dw);
                if let Some(b) = bias {
                    send(*b, db);
                }
            }
            Op::MaxPool1d { input, argmax } => {
                let dx = kernels::maxpool1d_backward(self.value(*input).shape(), argmax, g);
                send(*input, dx);
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, d)| if *v > 0.0 { *d } else { 0.0 })
                    .collect();
                send(*input, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Linear {
                input,
                weights,
                bias,
            } => {
                let (dx, dw, db) = kernels::linear_backward(
                    self.value(*input),
                    self.value(*weights),
                    g,
                    self.tracks(*input),
                )?;
                if let Some(dx) = dx {
                    send(*input, dx);
                }
                send(*weights, dw);
                if let Some(b) = bias {
                    send(*b, db);
                }
            }
            Op::Reshape(input) => {
                send(*input, g.reshaped(self.value(*input).shape().to_vec())?);
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                let mut neg = g.clone();
                neg.scale(-1.0);
                send(*b, neg);
            }
            Op::Scale(input, factor) => {
                let mut d = g.clone();
                d.scale(*factor);
                send(*input, d);
            }
            Op::AddScalar(input) => send(*input, g.clone()),
            Op::SquaredNorm(input) => {
                let mut d = self.value(*input).clone();
                d.scale(2.0 * scalar(g));
                send(*input, d);
            }
            Op::Norm(input) => {
                let n = scalar(node.value.as_ref().expect("norm value"));
                let mut d = self.value(*input).clone();
                if n > 0.0 {
                    d.scale(scalar(g) / n);
                } else {
                    d.scale(0.0);
                }
                send(*input, d);
            }
            Op::Exp(input) => {
                let y = node.value.as_ref().expect("exp value");
                let data = y.data().iter().zip(g.data()).map(|(a, b)| a * b).collect();
                send(*input, Tensor::new(y.shape().to_vec(), data)?);
            }
            Op::Abs(input) => {
                let x = self.value(*input);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, d)| {
                        if *v > 0.0 {
                            *d
                        } else if *v < 0.0 {
                            -*d
                        } else {
                            0.0
                        }
                    })
                    .collect();
                send(*input, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Sum(inputs) => {
                for id in inputs {
                    send(*id, g.clone());
                }
            }
        }
        Ok(())
    }
}

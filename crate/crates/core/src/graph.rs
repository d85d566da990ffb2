//! Reverse-mode autodiff over a flat tape.
//!
//! A [`Graph`] is an append-only list of nodes; every op validates shapes,
//! runs its forward kernel immediately, and records what the backward pass
//! needs (op kind, input ids, caches). Ids are indices into the tape, so
//! the tape is topologically ordered by construction and [`Graph::backward`]
//! is a single reverse sweep.
//!
//! Tensors are validated finite when they enter the graph; every kernel
//! preserves finiteness on finite input except through training divergence,
//! which the trainer detects at the loss.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::ops::{self, Padding};
use crate::tensor::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("backward requires a scalar loss node, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("node id {id} does not belong to this graph")]
    BadNode { id: usize },
}

enum Op {
    Leaf,
    Conv1d { padding: Padding },
    LpPool { p: f64, window: usize },
    Upsample { target: usize },
    Gru { cache: Vec<f64> },
    Lstm { cache: Vec<f64> },
    Affine,
    Relu,
    EmbedMean { indices: Vec<usize> },
    ExpNegL2,
    BceMean { y: Vec<f64> },
    Sum,
    SumSquares,
    WeightedSum { weights: Vec<f64> },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    grad: Vec<f64>,
    /// True when a parameter leaf is reachable below this node.
    requires: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, param: bool) -> NodeId {
        let requires = param || inputs.iter().any(|id| self.nodes[id.0].requires);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            grad: Vec::new(),
            requires,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<(), GraphError> {
        if id.0 >= self.nodes.len() {
            return Err(GraphError::BadNode { id: id.0 });
        }
        Ok(())
    }

    fn val(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Non-trainable leaf (activations, features). Validated finite.
    pub fn input(&mut self, t: Tensor) -> Result<NodeId, GraphError> {
        t.check_finite()?;
        Ok(self.push(Op::Leaf, vec![], t, false))
    }

    /// Trainable leaf; `backward` populates its gradient. Validated finite.
    pub fn param(&mut self, t: Tensor) -> Result<NodeId, GraphError> {
        t.check_finite()?;
        Ok(self.push(Op::Leaf, vec![], t, true))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.val(id)
    }

    /// Gradient of the last `backward` loss w.r.t. this node. Empty before
    /// `backward` and for nodes outside the swept range.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    // ── ops ──

    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        padding: Padding,
    ) -> Result<NodeId, GraphError> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let out = ops::conv1d(self.val(x), self.val(w), self.val(b), padding)?;
        Ok(self.push(Op::Conv1d { padding }, vec![x, w, b], out, false))
    }

    pub fn lp_pool(&mut self, x: NodeId, p: f64, window: usize) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let out = ops::lp_pool(self.val(x), p, window)?;
        Ok(self.push(Op::LpPool { p, window }, vec![x], out, false))
    }

    pub fn upsample_linear(&mut self, x: NodeId, target: usize) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let out = ops::upsample_linear(self.val(x), target)?;
        Ok(self.push(Op::Upsample { target }, vec![x], out, false))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let out = ops::affine(self.val(x), self.val(w), self.val(b))?;
        Ok(self.push(Op::Affine, vec![x, w, b], out, false))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let out = ops::relu(self.val(x));
        Ok(self.push(Op::Relu, vec![x], out, false))
    }

    pub fn gru(
        &mut self,
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b_ih: NodeId,
        b_hh: NodeId,
    ) -> Result<NodeId, GraphError> {
        for id in [x, w_ih, w_hh, b_ih, b_hh] {
            self.check(id)?;
        }
        let (out, cache) = ops::gru_forward(
            self.val(x),
            self.val(w_ih),
            self.val(w_hh),
            self.val(b_ih),
            self.val(b_hh),
        )?;
        Ok(self.push(Op::Gru { cache }, vec![x, w_ih, w_hh, b_ih, b_hh], out, false))
    }

    pub fn lstm(
        &mut self,
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b_ih: NodeId,
        b_hh: NodeId,
    ) -> Result<NodeId, GraphError> {
        for id in [x, w_ih, w_hh, b_ih, b_hh] {
            self.check(id)?;
        }
        let (out, cache) = ops::lstm_forward(
            self.val(x),
            self.val(w_ih),
            self.val(w_hh),
            self.val(b_ih),
            self.val(b_hh),
        )?;
        Ok(self.push(Op::Lstm { cache }, vec![x, w_ih, w_hh, b_ih, b_hh], out, false))
    }

    pub fn embed_mean(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId, GraphError> {
        self.check(table)?;
        let out = ops::embed_mean(self.val(table), indices)?;
        Ok(self.push(
            Op::EmbedMean {
                indices: indices.to_vec(),
            },
            vec![table],
            out,
            false,
        ))
    }

    pub fn exp_neg_l2(&mut self, e_a: NodeId, e_p: NodeId) -> Result<NodeId, GraphError> {
        self.check(e_a)?;
        self.check(e_p)?;
        let out = ops::exp_neg_l2(self.val(e_a), self.val(e_p))?;
        Ok(self.push(Op::ExpNegL2, vec![e_a, e_p], out, false))
    }

    pub fn bce_mean(&mut self, s: NodeId, y: &[f64]) -> Result<NodeId, GraphError> {
        self.check(s)?;
        let out = ops::bce_mean(self.val(s), y)?;
        Ok(self.push(Op::BceMean { y: y.to_vec() }, vec![s], out, false))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let out = ops::sum(self.val(x));
        Ok(self.push(Op::Sum, vec![x], out, false))
    }

    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let out = ops::sum_squares(self.val(x));
        Ok(self.push(Op::SumSquares, vec![x], out, false))
    }

    pub fn weighted_sum(&mut self, x: NodeId, weights: &[f64]) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let out = ops::weighted_sum(self.val(x), weights)?;
        Ok(self.push(
            Op::WeightedSum {
                weights: weights.to_vec(),
            },
            vec![x],
            out,
            false,
        ))
    }

    // ── backward ──

    /// Reverse sweep from a scalar loss. Populates gradients for every
    /// node on a path from a parameter leaf to the loss; other leaves are
    /// skipped.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GraphError> {
        self.check(loss)?;
        let numel = self.nodes[loss.0].value.numel();
        if numel != 1 {
            return Err(GraphError::NonScalarLoss { numel });
        }
        for node in self.nodes.iter_mut().take(loss.0 + 1) {
            node.grad = vec![0.0; node.value.numel()];
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            // Inputs always precede `i` on the tape, so take the upstream
            // gradient and op record out of the node, accumulate into
            // earlier nodes, then restore them.
            let dy = core::mem::take(&mut self.nodes[i].grad);
            let inputs = self.nodes[i].inputs.clone();
            let op = core::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            match &op {
                Op::Leaf => unreachable!(),
                Op::Conv1d { padding } => {
                    let (dx, dw, db) = ops::conv1d_vjp(
                        self.val(inputs[0]),
                        self.val(inputs[1]),
                        *padding,
                        &dy,
                    );
                    self.accumulate(inputs[0], &dx);
                    self.accumulate(inputs[1], &dw);
                    self.accumulate(inputs[2], &db);
                }
                Op::LpPool { p, window } => {
                    let dx = ops::lp_pool_vjp(self.val(inputs[0]), *p, *window, &dy);
                    self.accumulate(inputs[0], &dx);
                }
                Op::Upsample { target } => {
                    let dx = ops::upsample_linear_vjp(self.val(inputs[0]), *target, &dy);
                    self.accumulate(inputs[0], &dx);
                }
                Op::Affine => {
                    let (dx, dw, db) =
                        ops::affine_vjp(self.val(inputs[0]), self.val(inputs[1]), &dy);
                    self.accumulate(inputs[0], &dx);
                    self.accumulate(inputs[1], &dw);
                    self.accumulate(inputs[2], &db);
                }
                Op::Relu => {
                    let dx = ops::relu_vjp(self.val(inputs[0]), &dy);
                    self.accumulate(inputs[0], &dx);
                }
                Op::Gru { cache } => {
                    let (dx, dw_ih, dw_hh, db_ih, db_hh) = ops::gru_vjp(
                        self.val(inputs[0]),
                        self.val(inputs[1]),
                        self.val(inputs[2]),
                        &self.nodes[i].value,
                        cache,
                        &dy,
                    );
                    self.accumulate(inputs[0], &dx);
                    self.accumulate(inputs[1], &dw_ih);
                    self.accumulate(inputs[2], &dw_hh);
                    self.accumulate(inputs[3], &db_ih);
                    self.accumulate(inputs[4], &db_hh);
                }
                Op::Lstm { cache } => {
                    let (dx, dw_ih, dw_hh, db_ih, db_hh) = ops::lstm_vjp(
                        self.val(inputs[0]),
                        self.val(inputs[1]),
                        self.val(inputs[2]),
                        &self.nodes[i].value,
                        cache,
                        &dy,
                    );
                    self.accumulate(inputs[0], &dx);
                    self.accumulate(inputs[1], &dw_ih);
                    self.accumulate(inputs[2], &dw_hh);
                    self.accumulate(inputs[3], &db_ih);
                    self.accumulate(inputs[4], &db_hh);
                }
                Op::EmbedMean { indices } => {
                    let dt = ops::embed_mean_vjp(self.val(inputs[0]), indices, &dy);
                    self.accumulate(inputs[0], &dt);
                }
                Op::ExpNegL2 => {
                    let s = self.nodes[i].value.data();
                    let (da, dp) =
                        ops::exp_neg_l2_vjp(self.val(inputs[0]), self.val(inputs[1]), s, &dy);
                    self.accumulate(inputs[0], &da);
                    self.accumulate(inputs[1], &dp);
                }
                Op::BceMean { y } => {
                    let ds = ops::bce_mean_vjp(self.val(inputs[0]), y, dy[0]);
                    self.accumulate(inputs[0], &ds);
                }
                Op::Sum => {
                    let n = self.nodes[inputs[0].0].value.numel();
                    let ds = vec![dy[0]; n];
                    self.accumulate(inputs[0], &ds);
                }
                Op::SumSquares => {
                    let ds: Vec<f64> = self.nodes[inputs[0].0]
                        .value
                        .data()
                        .iter()
                        .map(|&v| 2.0 * v * dy[0])
                        .collect();
                    self.accumulate(inputs[0], &ds);
                }
                Op::WeightedSum { weights } => {
                    let ds: Vec<f64> = weights.iter().map(|&w| w * dy[0]).collect();
                    self.accumulate(inputs[0], &ds);
                }
            }
            self.nodes[i].op = op;
            self.nodes[i].grad = dy;
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, g: &[f64]) {
        if !self.nodes[id.0].requires {
            return;
        }
        let dst = &mut self.nodes[id.0].grad;
        debug_assert_eq!(dst.len(), g.len());
        for (d, s) in dst.iter_mut().zip(g) {
            *d += s;
        }
    }
}

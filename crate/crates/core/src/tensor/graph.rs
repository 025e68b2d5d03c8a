use super::ops;
use super::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Primitive recorded on a graph node.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    /// `[m, k] x [k, n] -> [m, n]`.
    Matmul,
    /// Input `[C, H, W]`, weight `[O, C, kh, kw]`, optional bias `[O]`.
    Conv2d { stride: usize, padding: usize },
    Relu,
    Silu,
    Exp,
    /// Elementwise with right-aligned broadcasting.
    Add,
    Sub,
    Mul,
    Concat { axis: usize },
    /// `[C, H, W] -> [C]`.
    GlobalAvgPool,
    /// Over the last axis.
    Softmax,
    Scale(f64),
    /// Mean of squared differences, scalar output.
    Mse,
    L2Norm,
    Sum,
    Reshape(Vec<usize>),
    /// Half-pixel bilinear resampling of `[C, H, W]`.
    ResizeBilinear { height: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    needs_grad: bool,
}

/// Append-only record of one forward pass.
///
/// Node inputs always precede the node, so reverse insertion order is a valid
/// reverse topological order.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradient of a scalar loss with respect to every node that requires one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
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

    /// Records a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        let needs_grad = t.requires_grad();
        self.push(Op::Leaf, Vec::new(), t, needs_grad)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> NodeId {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Evaluates `op` on existing nodes and records the result.
    pub fn forward_op(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(TensorError::UnknownNode(bad.0));
        }
        let values: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = ops::forward(&op, &values)?;
        let needs_grad = inputs.iter().any(|id| self.nodes[id.0].needs_grad);
        Ok(self.push(op, inputs.to_vec(), value, needs_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Matmul, &[a, b])
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.forward_op(Op::Conv2d { stride, padding }, &inputs)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Relu, &[x])
    }

    pub fn silu(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Silu, &[x])
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Exp, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Mul, &[a, b])
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        self.forward_op(Op::Concat { axis }, xs)
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::GlobalAvgPool, &[x])
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Softmax, &[x])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.forward_op(Op::Scale(c), &[x])
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Mse, &[a, b])
    }

    pub fn l2norm(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::L2Norm, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Sum, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.forward_op(Op::Reshape(shape.to_vec()), &[x])
    }

    pub fn resize_bilinear(&mut self, x: NodeId, height: usize, width: usize) -> Result<NodeId> {
        self.forward_op(Op::ResizeBilinear { height, width }, &[x])
    }

    /// `x · Wᵀ`-free affine map of a vector: `reshape(x, [1, n]) · w + b`, returned as `[m]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.value(x).numel();
        let row = self.reshape(x, &[1, n])?;
        let y = self.matmul(row, w)?;
        let m = self.value(y).numel();
        let y = self.reshape(y, &[m])?;
        self.add(y, b)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every leaf created with `requires_grad` receives a gradient of its own
    /// shape, zero-filled when it does not influence the loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or(TensorError::UnknownNode(loss.0))?;
        if node.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if node.needs_grad {
            grads[loss.0] = Some(Tensor::full(node.value.shape(), 1.0));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if node.op == Op::Leaf {
                continue;
            }
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|id| self.nodes[id.0].needs_grad)
                .collect();
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|id| &self.nodes[id.0].value).collect();
            let input_grads = ops::backward(&node.op, &inputs, &node.value, &grad, &needs);
            for (id, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                match &mut grads[id.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(grad);
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.op == Op::Leaf && node.needs_grad && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(3));
        let x = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let xn = g.constant(x.clone());
        let y = g.matmul(i, xn).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn conv_of_constant_ones() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 4, 4], 1.0));
        let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn relu_of_negative_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![-0.5, -3.0, -1e-9]));
        let y = g.relu(x).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_error_names_primitive() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let xv = Tensor::vector(vec![1.5, -2.0, 0.25]);
        let x = g.leaf(xv.clone().with_grad());
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        let expect: Vec<f64> = xv.data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(grads.get(x).unwrap().data(), expect.as_slice());
    }

    #[test]
    fn mse_of_self_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.3, 0.7]).with_grad());
        let loss = g.mse(x, x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]).with_grad());
        let y = g.scale(x, 2.0).unwrap();
        assert!(matches!(
            g.backward(y),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0]).with_grad());
        let unused = g.leaf(Tensor::zeros(&[2, 2]).with_grad());
        let loss = g.sum(x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(unused).unwrap(), &Tensor::zeros(&[2, 2]));
    }
}

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, CrossEntropyCache, RowMix};
use super::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    MatMul(Var, Var),
    MaxPool { x: Var, axis: usize, argmax: Vec<usize> },
    Reshape(Var),
    Transpose(Var),
    Concat(Var, Var),
    RowMix(Var, Arc<RowMix>),
    Sum(Var),
    CrossEntropy(Var, CrossEntropyCache),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation tape for reverse-mode differentiation.
///
/// Nodes are immutable once recorded. [`Graph::backward`] fills the gradient
/// slot of every node that depends on a `requires_grad` leaf.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Parameters registered through [`Graph::named_leaf`], in insertion order.
    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn named_leaf(&mut self, name: &str, t: Tensor) -> Var {
        if let Some((_, v)) = self.params.iter().find(|(n, _)| n == name) {
            return *v;
        }
        let v = self.leaf(t.with_requires_grad(true));
        self.params.push((name.into(), v));
        v
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        value.grad = None;
        value.requires_grad = requires_grad;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn checked(&mut self, name: &'static str, value: Tensor, op: Op, rg: bool) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::add(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.checked("add", v, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::mul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.checked("mul", v, Op::Mul(a, b), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        kernels::relu_in_place(&mut v);
        let rg = self.rg(a);
        self.checked("relu", v, Op::Relu(a), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.checked("matmul", v, Op::MatMul(a, b), rg)
    }

    pub fn max_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (v, argmax) = kernels::max_pool_axis(self.value(x), axis)?;
        let rg = self.rg(x);
        self.checked("max_pool", v, Op::MaxPool { x, axis, argmax }, rg)
    }

    /// Indices of the maximizers recorded by a `max_pool` node.
    pub fn argmax(&self, pooled: Var) -> Option<&[usize]> {
        match &self.nodes[pooled.0].op {
            Op::MaxPool { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::Reshape(a), rg))
    }

    pub fn transpose_last2(&mut self, a: Var) -> Result<Var> {
        let v = kernels::transpose_last2(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::Transpose(a), rg))
    }

    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::concat_last(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Concat(a, b), rg))
    }

    pub fn row_mix(&mut self, a: Var, mix: &Arc<RowMix>) -> Result<Var> {
        let v = mix.apply(self.value(a))?;
        let rg = self.rg(a);
        self.checked("row_mix", v, Op::RowMix(a, mix.clone()), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = kernels::sum(self.value(a));
        let rg = self.rg(a);
        self.checked("sum", v, Op::Sum(a), rg)
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: usize) -> Result<Var> {
        let (v, cache) = kernels::softmax_cross_entropy(self.value(logits), targets, ignore)?;
        let rg = self.rg(logits);
        self.checked("cross_entropy", v, Op::CrossEntropy(logits, cache), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every node that depends on a `requires_grad` leaf gets a gradient,
    /// zero-filled when the loss does not actually reach it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::usage(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let gout = Tensor {
                shape: self.nodes[i].value.shape.clone(),
                data: g,
                grad: None,
                requires_grad: false,
            };
            self.backprop_node(i, &gout, &mut grads);
            grads[i] = Some(gout.data);
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.value.grad = if node.requires_grad {
                Some(grads[i].take().unwrap_or_else(|| vec![0.0; node.value.len()]))
            } else {
                None
            };
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, gout: &Tensor, grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let want = |v: Var| nodes[v.0].requires_grad;
        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut [f64] {
            grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::Concat(a, b) => {
                let (a, b) = (*a, *b);
                let take = |grads: &mut [Option<Vec<f64>>], v: Var| {
                    grads[v.0].take().unwrap_or_else(|| vec![0.0; nodes[v.0].value.len()])
                };
                let mut ga = want(a).then(|| take(grads, a));
                // Same operand on both sides: accumulate the second half separately.
                let mut gb = want(b).then(|| if a == b { vec![0.0; nodes[b.0].value.len()] } else { take(grads, b) });
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (ra, rb) = (ga.as_deref_mut(), gb.as_deref_mut());
                match &nodes[i].op {
                    Op::Add(..) => kernels::add_backward(va.shape(), vb.shape(), gout, ra, rb),
                    Op::Mul(..) => kernels::mul_backward(va, vb, gout, ra, rb),
                    Op::MatMul(..) => kernels::matmul_backward(va, vb, gout, ra, rb),
                    Op::Concat(..) => {
                        let ca = *va.shape().last().unwrap();
                        let cb = *vb.shape().last().unwrap();
                        kernels::concat_backward(ca, cb, gout, ra, rb)
                    }
                    _ => unreachable!(),
                }
                if let Some(g) = ga {
                    grads[a.0] = Some(g);
                }
                if let Some(g) = gb {
                    if a == b {
                        let acc = slot(grads, nodes, a);
                        acc.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    } else {
                        grads[b.0] = Some(g);
                    }
                }
            }
            Op::Relu(a) if want(*a) => kernels::relu_backward(&nodes[i].value, gout, slot(grads, nodes, *a)),
            Op::MaxPool { x, axis, argmax } if want(*x) => {
                let shape = nodes[x.0].value.shape().to_vec();
                kernels::max_pool_backward(&shape, *axis, argmax, gout, slot(grads, nodes, *x))
            }
            Op::Reshape(a) if want(*a) => {
                slot(grads, nodes, *a).iter_mut().zip(gout.data()).for_each(|(x, y)| *x += y)
            }
            Op::Transpose(a) if want(*a) => {
                let shape = nodes[a.0].value.shape().to_vec();
                kernels::transpose_backward(&shape, gout, slot(grads, nodes, *a))
            }
            Op::RowMix(a, mix) if want(*a) => mix.backward(gout, slot(grads, nodes, *a)),
            Op::Sum(a) if want(*a) => {
                let g = gout.data()[0];
                slot(grads, nodes, *a).iter_mut().for_each(|x| *x += g)
            }
            Op::CrossEntropy(a, cache) if want(*a) => {
                kernels::cross_entropy_backward(cache, gout.data()[0], slot(grads, nodes, *a))
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::new([1], alloc::vec![3.0]).unwrap().with_requires_grad(true));
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[6.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let w = g.named_leaf("w", Tensor::ones([2]));
        let unused = g.named_leaf("u", Tensor::ones([3]));
        let loss = g.sum(w).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0]);
        assert_eq!(g.grad(unused).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let w = g.named_leaf("w", Tensor::ones([2]));
        assert!(matches!(g.backward(w), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_carry_no_gradient() {
        let mut g = Graph::new();
        let c = g.leaf(Tensor::ones([2]));
        let w = g.named_leaf("w", Tensor::full([2], 2.0));
        let p = g.mul(c, w).unwrap();
        let loss = g.sum(p).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(w) + sum(w * 2)
        let mut g = Graph::new();
        let w = g.named_leaf("w", Tensor::ones([2]));
        let two = g.leaf(Tensor::full([2], 2.0));
        let a = g.sum(w).unwrap();
        let m = g.mul(w, two).unwrap();
        let b = g.sum(m).unwrap();
        let loss = g.add(a, b).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn named_leaf_is_deduplicated() {
        let mut g = Graph::new();
        let a = g.named_leaf("w", Tensor::ones([1]));
        let b = g.named_leaf("w", Tensor::ones([1]));
        assert_eq!(a, b);
        assert_eq!(g.params().len(), 1);
    }
}

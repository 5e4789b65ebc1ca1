use alloc::sync::Arc;

use super::kernels::{self, RowMix};
use super::{Graph, ParamSet, Tensor, Var};
use crate::{Error, Result};

/// Evaluation backend for network code.
///
/// Operands are taken by value: [`Graph`] handles are `Copy`, while
/// [`Eager`] reuses the moved buffers.
pub trait Exec {
    type T: Clone;

    fn value<'a>(&'a self, t: &'a Self::T) -> &'a Tensor;
    fn input(&mut self, t: Tensor) -> Self::T;
    fn param(&mut self, params: &ParamSet, name: &str) -> Result<Self::T>;

    fn add(&mut self, a: Self::T, b: Self::T) -> Result<Self::T>;
    fn mul(&mut self, a: Self::T, b: Self::T) -> Result<Self::T>;
    fn relu(&mut self, a: Self::T) -> Result<Self::T>;
    fn matmul(&mut self, a: Self::T, b: Self::T) -> Result<Self::T>;
    fn max_pool(&mut self, a: Self::T, axis: usize) -> Result<Self::T>;
    fn reshape(&mut self, a: Self::T, shape: &[usize]) -> Result<Self::T>;
    fn transpose_last2(&mut self, a: Self::T) -> Result<Self::T>;
    fn concat_last(&mut self, a: Self::T, b: Self::T) -> Result<Self::T>;
    fn row_mix(&mut self, a: Self::T, mix: &Arc<RowMix>) -> Result<Self::T>;

    fn shape(&self, t: &Self::T) -> alloc::vec::Vec<usize> {
        self.value(t).shape().to_vec()
    }
}

impl Exec for Graph {
    type T = Var;

    fn value<'a>(&'a self, t: &'a Var) -> &'a Tensor {
        Graph::value(self, *t)
    }

    fn input(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let t = params.get(name).ok_or_else(|| Error::usage(alloc::format!("unknown parameter `{name}`")))?;
        Ok(self.named_leaf(name, t.clone()))
    }

    fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        Graph::add(self, a, b)
    }

    fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        Graph::mul(self, a, b)
    }

    fn relu(&mut self, a: Var) -> Result<Var> {
        Graph::relu(self, a)
    }

    fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        Graph::matmul(self, a, b)
    }

    fn max_pool(&mut self, a: Var, axis: usize) -> Result<Var> {
        Graph::max_pool(self, a, axis)
    }

    fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        Graph::reshape(self, a, shape)
    }

    fn transpose_last2(&mut self, a: Var) -> Result<Var> {
        Graph::transpose_last2(self, a)
    }

    fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        Graph::concat_last(self, a, b)
    }

    fn row_mix(&mut self, a: Var, mix: &Arc<RowMix>) -> Result<Var> {
        Graph::row_mix(self, a, mix)
    }
}

/// Direct evaluation without a tape.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

fn finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if cfg!(debug_assertions) && !t.all_finite() {
        return Err(Error::NonFinite { op });
    }
    Ok(t)
}

impl Exec for Eager {
    type T = Tensor;

    fn value<'a>(&'a self, t: &'a Tensor) -> &'a Tensor {
        t
    }

    fn input(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn param(&mut self, params: &ParamSet, name: &str) -> Result<Tensor> {
        params
            .get(name)
            .map(|t| Tensor::new(t.shape(), t.data().to_vec()).expect("parameter shape"))
            .ok_or_else(|| Error::usage(alloc::format!("unknown parameter `{name}`")))
    }

    fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if b.len() <= a.len() && super::broadcast_shape("add", a.shape(), b.shape())? == a.shape() {
            // In place when `a` already has the output shape.
            let mut a = a;
            let out = a.shape().to_vec();
            let sb = super::broadcast_strides(b.shape(), &out);
            let sa = super::broadcast_strides(&out, &out);
            let bd = b.data();
            let ad = a.data_mut();
            super::broadcast_zip(&out, &sa, &sb, |o, _, ib| ad[o] += bd[ib]);
            return finite("add", a);
        }
        finite("add", kernels::add(&a, &b)?)
    }

    fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        finite("mul", kernels::mul(&a, &b)?)
    }

    fn relu(&mut self, mut a: Tensor) -> Result<Tensor> {
        kernels::relu_in_place(&mut a);
        Ok(a)
    }

    fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        finite("matmul", kernels::matmul(&a, &b)?)
    }

    fn max_pool(&mut self, a: Tensor, axis: usize) -> Result<Tensor> {
        Ok(kernels::max_pool_axis(&a, axis)?.0)
    }

    fn reshape(&mut self, a: Tensor, shape: &[usize]) -> Result<Tensor> {
        a.reshape(shape)
    }

    fn transpose_last2(&mut self, a: Tensor) -> Result<Tensor> {
        kernels::transpose_last2(&a)
    }

    fn concat_last(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        kernels::concat_last(&a, &b)
    }

    fn row_mix(&mut self, a: Tensor, mix: &Arc<RowMix>) -> Result<Tensor> {
        finite("row_mix", mix.apply(&a)?)
    }
}

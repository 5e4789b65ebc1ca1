use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, MlpSpec, Tensor};
use crate::{Error, Result};

/// Named trainable tensors plus the MLP descriptors that produced them.
///
/// Iteration order is insertion order, which keeps updates and checkpoints
/// deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
    specs: Vec<(String, MlpSpec)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        let t = t.with_requires_grad(true);
        match self.index.get(name) {
            Some(&i) => self.tensors[i] = t,
            None => {
                self.index.insert(name.to_string(), self.tensors.len());
                self.names.push(name.to_string());
                self.tensors.push(t);
            }
        }
    }

    /// Replaces the value of an existing parameter; the shape must match.
    pub fn set(&mut self, name: &str, t: Tensor) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::usage(format!("unknown parameter `{name}`")))?;
        if self.tensors[i].shape() != t.shape() {
            return Err(Error::dim("set", self.tensors[i].shape(), t.shape()));
        }
        self.tensors[i] = t.with_requires_grad(true);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn describe(&mut self, prefix: &str, spec: MlpSpec) {
        match self.specs.iter_mut().find(|(p, _)| p == prefix) {
            Some(slot) => slot.1 = spec,
            None => self.specs.push((prefix.to_string(), spec)),
        }
    }

    pub fn specs(&self) -> &[(String, MlpSpec)] {
        &self.specs
    }

    pub fn spec(&self, prefix: &str) -> Option<&MlpSpec> {
        self.specs.iter().find(|(p, _)| p == prefix).map(|(_, s)| s)
    }

    /// Copies gradients of parameters registered on `graph` into their grad
    /// slots. Parameters the graph never touched get zero gradients.
    pub fn collect_grads(&mut self, graph: &Graph) {
        for t in &mut self.tensors {
            let n = t.len();
            t.grad = Some(vec![0.0; n]);
        }
        for (name, var) in graph.params() {
            if let (Some(&i), Some(g)) = (self.index.get(name), graph.grad(*var)) {
                self.tensors[i].grad = Some(g.to_vec());
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Stochastic gradient descent with classical momentum:
/// `v <- momentum * v + g`, `p <- p - lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: BTreeMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be non-negative, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: BTreeMap::new(),
        })
    }

    /// Applies one update from the grad slots of `params`.
    ///
    /// Every gradient is checked before anything is modified, so a
    /// non-finite gradient leaves the parameters untouched.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (name, t) in params.names.iter().zip(&params.tensors) {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient(name.clone()));
                }
            }
        }
        for (name, t) in params.names.iter().zip(params.tensors.iter_mut()) {
            let Some(g) = t.grad.take() else { continue };
            let v = self.velocity.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for ((p, vi), gi) in t.data.iter_mut().zip(v.iter_mut()).zip(&g) {
                *vi = self.momentum * *vi + gi;
                *p -= self.lr * *vi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, value: f64, grad: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::full([1], value));
        p.get_mut(name).unwrap().set_grad(Some(vec![grad])).unwrap();
        p
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = one("w", 1.25, 17.0);
        Sgd::new(0.0, 0.9).unwrap().step(&mut p).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.25]);
    }

    #[test]
    fn plain_step() {
        let mut p = one("w", 1.0, 0.5);
        Sgd::new(1.0, 0.0).unwrap().step(&mut p).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[0.5]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = one("w", 0.0, 1.0);
        let mut opt = Sgd::new(0.1, 0.5).unwrap();
        opt.step(&mut p).unwrap();
        p.get_mut("w").unwrap().set_grad(Some(vec![1.0])).unwrap();
        opt.step(&mut p).unwrap();
        // v1 = 1, v2 = 1.5
        assert!((p.get("w").unwrap().data()[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut p = one("enc.w", 1.0, f64::NAN);
        let err = Sgd::new(0.1, 0.0).unwrap().step(&mut p).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("enc.w".into()));
        assert_eq!(p.get("enc.w").unwrap().data(), &[1.0]);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Sgd::new(-1.0, 0.0).is_err());
        assert!(Sgd::new(0.1, 1.0).is_err());
    }
}

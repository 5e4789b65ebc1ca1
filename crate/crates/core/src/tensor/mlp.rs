use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Exec, ParamSet, Tensor};
use crate::math;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "none" | "linear" => Some(Activation::None),
            _ => None,
        }
    }
}

/// A stack of pointwise affine layers.
///
/// `widths[0]` is the input width, `widths[i + 1]` the output of layer `i`;
/// `activations` has one entry per layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl MlpSpec {
    /// ReLU after every layer except the last.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        let n = widths.len().saturating_sub(1);
        let activations = (0..n)
            .map(|i| if i + 1 < n { Activation::Relu } else { Activation::None })
            .collect();
        Self {
            widths: widths.to_vec(),
            activations,
            seed,
        }
    }

    /// ReLU after every layer.
    pub fn relu(widths: &[usize], seed: u64) -> Self {
        let n = widths.len().saturating_sub(1);
        Self {
            widths: widths.to_vec(),
            activations: alloc::vec![Activation::Relu; n],
            seed,
        }
    }

    pub fn layers(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::config(format!("MLP widths must be positive: {:?}", self.widths)));
        }
        if self.activations.len() != self.layers() {
            return Err(Error::config(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layers()
            )));
        }
        Ok(())
    }

    pub fn weight_name(prefix: &str, layer: usize) -> alloc::string::String {
        format!("{prefix}.l{layer}.w")
    }

    pub fn bias_name(prefix: &str, layer: usize) -> alloc::string::String {
        format!("{prefix}.l{layer}.b")
    }

    /// Registers freshly initialised weights under `prefix`.
    ///
    /// Weights are uniform in `±sqrt(6 / (fan_in + fan_out))`; biases start at 0.
    pub fn init(&self, prefix: &str, params: &mut ParamSet) -> Result<()> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let w = Tensor::from_fn([fan_in, fan_out], |_| rng.gen_range(-limit..limit));
            params.insert(&Self::weight_name(prefix, l), w);
            params.insert(&Self::bias_name(prefix, l), Tensor::zeros([fan_out]));
        }
        params.describe(prefix, self.clone());
        Ok(())
    }
}

/// Applies the MLP registered under `prefix` to the trailing axis of `x`.
///
/// Every leading position is processed independently with shared weights,
/// i.e. a stack of 1×1 convolutions.
pub fn mlp_forward<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    spec: &MlpSpec,
    x: X::T,
) -> Result<X::T> {
    spec.validate()?;
    let shape = ex.shape(&x);
    let c_in = shape.last().copied().unwrap_or(0);
    if c_in != spec.input_width() {
        return Err(Error::dim("mlp", &shape, &spec.widths));
    }
    // Batched matmul broadcasts the 2-D weights over any leading axes.
    let flat = shape.len() < 2;
    let mut h = if flat { ex.reshape(x, &[1, c_in])? } else { x };
    for l in 0..spec.layers() {
        let w = ex.param(params, &MlpSpec::weight_name(prefix, l))?;
        let b = ex.param(params, &MlpSpec::bias_name(prefix, l))?;
        h = ex.matmul(h, w)?;
        h = ex.add(h, b)?;
        if spec.activations[l] == Activation::Relu {
            h = ex.relu(h)?;
        }
    }
    if flat {
        h = ex.reshape(h, &[spec.output_width()])?;
    }
    Ok(h)
}

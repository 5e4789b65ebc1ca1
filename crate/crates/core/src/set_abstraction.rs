//! Neighborhood aggregation operators.
//!
//! All three take unfolded features `F_in: [M, S, C]` (S slots per center,
//! coordinates already local) and produce `[M, C_out]`:
//!
//! * PointNet: `maxpool_S(MLP(F_in ⊗ mask))`
//! * SpiderCNN-style: `MLP_out(MLP_in(F_in)ᵀ · (WeightNet(P) ⊗ mask))`
//! * PointConv-style: as above with `MLP_in(F_in) ⊗ DensityNet(D)`
//!
//! The contraction runs over the slot axis per center, giving a
//! `c_f × c_mid` matrix that is flattened before `MLP_out`.

use alloc::format;
use alloc::string::String;

use crate::tensor::{mlp_forward, Exec, MlpSpec, ParamSet};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    PointNet,
    SpiderCnn,
    PointConv,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::PointNet => "pointnet",
            Variant::SpiderCnn => "spidercnn",
            Variant::PointConv => "pointconv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pointnet" => Some(Variant::PointNet),
            "spidercnn" | "spider" | "pscnn" => Some(Variant::SpiderCnn),
            "pointconv" | "p2conv" => Some(Variant::PointConv),
            _ => None,
        }
    }
}

/// Networks of one aggregation stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Aggregation {
    PointNet {
        mlp: MlpSpec,
    },
    SpiderCnn {
        mlp_in: MlpSpec,
        weightnet: MlpSpec,
        mlp_out: MlpSpec,
    },
    PointConv {
        mlp_in: MlpSpec,
        weightnet: MlpSpec,
        densitynet: MlpSpec,
        mlp_out: MlpSpec,
    },
}

impl Aggregation {
    /// Default widths for a stage mapping `c_in` unfolded channels to `c_out`.
    ///
    /// PointNet gets two layers of `c_out`; the soft variants project to
    /// `c_f = c_out / 2` before the contraction and use one output layer.
    pub fn build(variant: Variant, c_in: usize, c_out: usize, c_mid: usize, seed: u64) -> Self {
        match variant {
            Variant::PointNet => Self::from_widths(variant, c_in, &[c_out, c_out], c_mid, seed),
            _ => Self::from_widths(variant, c_in, &[c_out], c_mid, seed),
        }
    }

    /// `widths` lists the layer outputs of the main MLP (PointNet) or of
    /// `MLP_out` (soft variants); the last entry is the stage output.
    ///
    /// WeightNet is `3 → 16 → c_mid`, DensityNet `1 → 8 → 1`, both with a
    /// ReLU hidden layer.
    pub fn from_widths(variant: Variant, c_in: usize, widths: &[usize], c_mid: usize, seed: u64) -> Self {
        let c_out = widths.last().copied().unwrap_or(0);
        let chain = |first: usize| {
            let mut w = alloc::vec![first];
            w.extend_from_slice(widths);
            w
        };
        let c_f = (c_out / 2).max(1);
        match variant {
            Variant::PointNet => Aggregation::PointNet {
                mlp: MlpSpec::relu(&chain(c_in), seed),
            },
            Variant::SpiderCnn => Aggregation::SpiderCnn {
                mlp_in: MlpSpec::relu(&[c_in, c_f], seed),
                weightnet: MlpSpec::relu(&[3, 16, c_mid], seed + 1),
                mlp_out: MlpSpec::relu(&chain(c_f * c_mid), seed + 2),
            },
            Variant::PointConv => Aggregation::PointConv {
                mlp_in: MlpSpec::relu(&[c_in, c_f], seed),
                weightnet: MlpSpec::relu(&[3, 16, c_mid], seed + 1),
                densitynet: MlpSpec::new(&[1, 8, 1], seed + 3),
                mlp_out: MlpSpec::relu(&chain(c_f * c_mid), seed + 2),
            },
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Aggregation::PointNet { .. } => Variant::PointNet,
            Aggregation::SpiderCnn { .. } => Variant::SpiderCnn,
            Aggregation::PointConv { .. } => Variant::PointConv,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Aggregation::PointNet { mlp } => mlp.input_width(),
            Aggregation::SpiderCnn { mlp_in, .. } | Aggregation::PointConv { mlp_in, .. } => mlp_in.input_width(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Aggregation::PointNet { mlp } => mlp.output_width(),
            Aggregation::SpiderCnn { mlp_out, .. } | Aggregation::PointConv { mlp_out, .. } => {
                mlp_out.output_width()
            }
        }
    }

    pub fn c_mid(&self) -> Option<usize> {
        match self {
            Aggregation::PointNet { .. } => None,
            Aggregation::SpiderCnn { weightnet, .. } | Aggregation::PointConv { weightnet, .. } => {
                Some(weightnet.output_width())
            }
        }
    }

    /// `(suffix, spec)` of every sub-network.
    pub fn parts(&self) -> alloc::vec::Vec<(&'static str, &MlpSpec)> {
        match self {
            Aggregation::PointNet { mlp } => alloc::vec![("mlp", mlp)],
            Aggregation::SpiderCnn { mlp_in, weightnet, mlp_out } => {
                alloc::vec![("mlp_in", mlp_in), ("weightnet", weightnet), ("mlp_out", mlp_out)]
            }
            Aggregation::PointConv {
                mlp_in,
                weightnet,
                densitynet,
                mlp_out,
            } => alloc::vec![
                ("mlp_in", mlp_in),
                ("weightnet", weightnet),
                ("densitynet", densitynet),
                ("mlp_out", mlp_out)
            ],
        }
    }

    /// Checks that widths chain from `c_in` unfolded channels.
    pub fn validate(&self, c_in: usize) -> Result<()> {
        for (_, spec) in self.parts() {
            spec.validate()?;
        }
        if self.input_width() != c_in {
            return Err(Error::config(format!(
                "aggregation expects {} input channels, stage provides {c_in}",
                self.input_width()
            )));
        }
        match self {
            Aggregation::PointNet { .. } => Ok(()),
            Aggregation::SpiderCnn { mlp_in, weightnet, mlp_out }
            | Aggregation::PointConv {
                mlp_in,
                weightnet,
                mlp_out,
                ..
            } => {
                if weightnet.input_width() != 3 {
                    return Err(Error::config("WeightNet consumes 3 local coordinates"));
                }
                let flat = mlp_in.output_width() * weightnet.output_width();
                if mlp_out.input_width() != flat {
                    return Err(Error::config(format!(
                        "MLP_out expects {} channels, contraction gives {flat}",
                        mlp_out.input_width()
                    )));
                }
                if let Aggregation::PointConv { densitynet, .. } = self {
                    let d = densitynet.output_width();
                    if densitynet.input_width() != 1 || (d != 1 && d != mlp_in.output_width()) {
                        return Err(Error::config("DensityNet maps 1 channel to 1 or c_f channels"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn init(&self, prefix: &str, params: &mut ParamSet) -> Result<()> {
        for (suffix, spec) in self.parts() {
            spec.init(&part(prefix, suffix), params)?;
        }
        Ok(())
    }
}

pub(crate) fn part(prefix: &str, suffix: &str) -> String {
    format!("{prefix}.{suffix}")
}

/// Per-stage inputs of the aggregation operators.
pub struct GroupInputs<T> {
    /// `[M, S, C]`.
    pub features: T,
    /// `[M, S, 3]`.
    pub local: T,
    /// `[M, S, 1]`.
    pub mask: T,
    /// `[M, 1, 1]`.
    pub density: T,
}

/// `maxpool_S(MLP(F_in ⊗ mask))`.
pub fn sa_pointnet<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    mlp: &MlpSpec,
    features: X::T,
    mask: X::T,
) -> Result<X::T> {
    let masked = ex.mul(features, mask)?;
    let h = mlp_forward(ex, params, &part(prefix, "mlp"), mlp, masked)?;
    ex.max_pool(h, 1)
}

fn contract<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    weightnet: &MlpSpec,
    mlp_out: &MlpSpec,
    branch: X::T,
    local: X::T,
    mask: X::T,
) -> Result<X::T> {
    let w = mlp_forward(ex, params, &part(prefix, "weightnet"), weightnet, local)?;
    let w = ex.mul(w, mask)?;
    let s = ex.shape(&branch);
    let (m, c_f) = (s[0], s[2]);
    let c_mid = weightnet.output_width();
    let at = ex.transpose_last2(branch)?;
    let f = ex.matmul(at, w)?;
    let f = ex.reshape(f, &[m, c_f * c_mid])?;
    mlp_forward(ex, params, &part(prefix, "mlp_out"), mlp_out, f)
}

/// `MLP_out(MLP_in(F_in)ᵀ · (WeightNet(P) ⊗ mask))`.
#[allow(clippy::too_many_arguments)]
pub fn sa_spidercnn<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    mlp_in: &MlpSpec,
    weightnet: &MlpSpec,
    mlp_out: &MlpSpec,
    features: X::T,
    local: X::T,
    mask: X::T,
) -> Result<X::T> {
    let a = mlp_forward(ex, params, &part(prefix, "mlp_in"), mlp_in, features)?;
    contract(ex, params, prefix, weightnet, mlp_out, a, local, mask)
}

/// `MLP_out((MLP_in(F_in) ⊗ DensityNet(D))ᵀ · (WeightNet(P) ⊗ mask))`.
#[allow(clippy::too_many_arguments)]
pub fn sa_pointconv<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    mlp_in: &MlpSpec,
    weightnet: &MlpSpec,
    densitynet: &MlpSpec,
    mlp_out: &MlpSpec,
    features: X::T,
    local: X::T,
    mask: X::T,
    density: X::T,
) -> Result<X::T> {
    let a = mlp_forward(ex, params, &part(prefix, "mlp_in"), mlp_in, features)?;
    let gate = mlp_forward(ex, params, &part(prefix, "densitynet"), densitynet, density)?;
    let a = ex.mul(a, gate)?;
    contract(ex, params, prefix, weightnet, mlp_out, a, local, mask)
}

/// Dispatches on the stage's variant.
pub fn aggregate<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    agg: &Aggregation,
    g: GroupInputs<X::T>,
) -> Result<X::T> {
    let s = ex.shape(&g.features);
    if s.len() != 3 || s[2] != agg.input_width() {
        return Err(Error::dim("aggregate", &s, &[agg.input_width()]));
    }
    match agg {
        Aggregation::PointNet { mlp } => sa_pointnet(ex, params, prefix, mlp, g.features, g.mask),
        Aggregation::SpiderCnn { mlp_in, weightnet, mlp_out } => {
            sa_spidercnn(ex, params, prefix, mlp_in, weightnet, mlp_out, g.features, g.local, g.mask)
        }
        Aggregation::PointConv {
            mlp_in,
            weightnet,
            densitynet,
            mlp_out,
        } => sa_pointconv(
            ex, params, prefix, mlp_in, weightnet, densitynet, mlp_out, g.features, g.local, g.mask, g.density,
        ),
    }
}

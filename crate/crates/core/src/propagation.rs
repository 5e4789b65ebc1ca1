//! Projected feature propagation.
//!
//! Every coarse sample scatters its feature to the fine pixels of its window
//! with weight `inv_dist^p`; each fine pixel divides by the weight it
//! received. The inverse distances come from the matching grouping stage, so
//! no search happens here. Valid fine pixels that no window reaches copy the
//! nearest valid sample in grid distance; empty fine pixels stay zero.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::grouping::NeighborhoodBundle;
use crate::math;
use crate::sampling::GridLevel;
use crate::set_abstraction::{aggregate, part, Aggregation, GroupInputs, Variant};
use crate::tensor::{mlp_forward, Exec, MlpSpec, ParamSet, RowMix, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FpHead {
    /// `MLP(concat(interp, skip))`.
    Plain { mlp: MlpSpec },
    /// A SpiderCNN- or PointConv-style aggregation over fine-level windows of
    /// `concat(interp, skip)`.
    Conv(Aggregation),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FPStageSpec {
    pub head: FpHead,
    /// Inverse-distance exponent.
    pub p: f64,
}

impl FPStageSpec {
    pub fn variant_name(&self) -> &'static str {
        match &self.head {
            FpHead::Plain { .. } => "plain",
            FpHead::Conv(a) => match a.variant() {
                Variant::SpiderCnn => "spider",
                Variant::PointConv => "pointconv",
                Variant::PointNet => "pointnet",
            },
        }
    }

    pub fn output_width(&self) -> usize {
        match &self.head {
            FpHead::Plain { mlp } => mlp.output_width(),
            FpHead::Conv(a) => a.output_width(),
        }
    }

    pub fn needs_fine_group(&self) -> bool {
        matches!(self.head, FpHead::Conv(_))
    }

    /// `c_in` is interpolated plus skip channels.
    pub fn validate(&self, c_in: usize) -> Result<()> {
        if !(self.p > 0.0) {
            return Err(Error::config("inverse-distance exponent p must be positive"));
        }
        match &self.head {
            FpHead::Plain { mlp } => {
                mlp.validate()?;
                if mlp.input_width() != c_in {
                    return Err(Error::config(alloc::format!(
                        "FP MLP expects {} channels, stage provides {c_in}",
                        mlp.input_width()
                    )));
                }
                Ok(())
            }
            FpHead::Conv(agg) => {
                if agg.variant() == Variant::PointNet {
                    return Err(Error::config("FP heads are plain, spider or pointconv"));
                }
                agg.validate(c_in + 3)
            }
        }
    }

    pub fn init(&self, prefix: &str, params: &mut ParamSet) -> Result<()> {
        match &self.head {
            FpHead::Plain { mlp } => mlp.init(&part(prefix, "mlp"), params),
            FpHead::Conv(agg) => agg.init(prefix, params),
        }
    }
}

/// Normalised scatter weights from the `M` samples of `bundle` to the fine level.
pub fn interpolation_mix(bundle: &NeighborhoodBundle, fine: &GridLevel, p: f64) -> Result<RowMix> {
    if bundle.fine_len != fine.len() {
        return Err(Error::dim("interpolate", &[bundle.fine_len], &[fine.len()]));
    }
    let m = bundle.centers();
    let mut received: Vec<Vec<(usize, f64)>> = vec![Vec::new(); fine.len()];
    for c in 0..m {
        for s in 0..bundle.slots {
            let i = c * bundle.slots + s;
            if bundle.mask[i] > 0.0 {
                let pix = bundle.neighbor[i].expect("masked slot has a pixel");
                received[pix].push((c, math::powf(bundle.inv_dist[i], p)));
            }
        }
    }
    let fine_w = fine.width;
    let mut mix = RowMix::new(m);
    for (pix, entries) in received.into_iter().enumerate() {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if total > 0.0 {
            mix.push_row(entries.into_iter().map(|(c, w)| (c, w / total)));
        } else if fine.valid[pix] {
            mix.push_row(nearest_sample(bundle, pix, fine_w).map(|c| (c, 1.0)));
        } else {
            mix.push_row(None);
        }
    }
    Ok(mix)
}

/// Closest valid sample in pixel distance (columns wrap), lowest index on ties.
///
/// Centers stay inside their own stride cell, so the search walks square
/// rings of coarse cells outward and stops once a ring cannot beat the best
/// distance found so far.
fn nearest_sample(bundle: &NeighborhoodBundle, pix: usize, width: usize) -> Option<usize> {
    let (v, u) = (pix / width, pix % width);
    let (sv, su) = bundle.stride;
    let (ch, cw) = (bundle.height as isize, bundle.width as isize);
    let (ci, cj) = ((v / sv) as isize, (u / su) as isize);
    let step = sv.min(su);
    let mut best: Option<(usize, usize)> = None;
    let max_ring = ch.max(cw);
    for r in 0..=max_ring {
        if r >= 1 {
            let lower = (r as usize - 1) * step;
            if let Some((bd, _)) = best {
                if lower * lower > bd {
                    break;
                }
            }
        }
        for di in -r..=r {
            let i = ci + di;
            if i < 0 || i >= ch {
                continue;
            }
            for dj in -r..=r {
                if di.abs() != r && dj.abs() != r {
                    continue;
                }
                let j = (cj + dj).rem_euclid(cw);
                let c = (i * cw + j) as usize;
                let Some(q) = bundle.center[c] else { continue };
                let (vq, uq) = (q / width, q % width);
                let du = u.abs_diff(uq);
                let du = du.min(width - du);
                let d = v.abs_diff(vq).pow(2) + du * du;
                if best.map_or(true, |(bd, bc)| d < bd || (d == bd && c < bc)) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Fine features `[N, C]` from coarse features `[M, C]`.
pub fn interpolate(coarse: &Tensor, mix: &RowMix) -> Result<Tensor> {
    mix.apply(coarse)
}

/// Fine-level windows used by the Conv heads.
pub struct FineGroup<'a, T> {
    pub gather: &'a Arc<RowMix>,
    pub slots: usize,
    pub local: T,
    pub mask: T,
    pub density: T,
}

/// `head(concat(interpolate(coarse), skip))`.
pub fn propagate<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    prefix: &str,
    spec: &FPStageSpec,
    coarse: X::T,
    skip: Option<X::T>,
    mix: &Arc<RowMix>,
    fine: Option<FineGroup<'_, X::T>>,
) -> Result<X::T> {
    let mut x = ex.row_mix(coarse, mix)?;
    if let Some(skip) = skip {
        x = ex.concat_last(x, skip)?;
    }
    match &spec.head {
        FpHead::Plain { mlp } => mlp_forward(ex, params, &part(prefix, "mlp"), mlp, x),
        FpHead::Conv(agg) => {
            let fine = fine.ok_or_else(|| Error::usage("conv FP head needs fine-level windows"))?;
            let n = ex.shape(&x)[0];
            let c = ex.shape(&x)[1];
            let g = ex.row_mix(x, fine.gather)?;
            let g = ex.reshape(g, &[n, fine.slots, c])?;
            let features = ex.concat_last(g, fine.local.clone())?;
            aggregate(
                ex,
                params,
                prefix,
                agg,
                GroupInputs {
                    features,
                    local: fine.local,
                    mask: fine.mask,
                    density: fine.density,
                },
            )
        }
    }
}

//! Projected grouping: k×k windows of rays around each sampled point,
//! filtered by a 3D radius.
//!
//! For every center the window is unfolded into `k²` slots (row-major,
//! center slot in the middle). Rows past the top or bottom edge are empty;
//! columns wrap around the 360° ring. Each slot then gets its local offset,
//! distance, radius mask and inverse distance, and each center an inverse
//! density. Cost is `O(M k²)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::sampling::{GridLevel, Sampling};
use crate::tensor::{RowMix, Tensor};
use crate::{Error, Result};

/// Guard for the zero distance of the center slot in the inverse distance map.
pub const INV_DIST_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupingConfig {
    /// Odd window side.
    pub k: usize,
    /// Meters.
    pub radius: f64,
    /// Density kernel bandwidth in meters.
    pub sigma: f64,
    /// Pixel spacing between window slots (rows, cols).
    pub dilation: (usize, usize),
}

impl GroupingConfig {
    /// `sigma = radius / 2`, contiguous window.
    pub fn new(k: usize, radius: f64) -> Self {
        Self {
            k,
            radius,
            sigma: radius / 2.0,
            dilation: (1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::config(format!("window side k must be odd, got {}", self.k)));
        }
        if !(self.radius > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::config("radius and sigma must be positive"));
        }
        if self.dilation.0 == 0 || self.dilation.1 == 0 {
            return Err(Error::config("dilation must be positive"));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.k * self.k
    }
}

/// Everything the aggregation and propagation steps need about one stage's
/// neighborhoods. Per-slot arrays are `[M, slots]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodBundle {
    pub height: usize,
    pub width: usize,
    pub slots: usize,
    /// Number of pixels of the level the windows were cut from.
    pub fine_len: usize,
    pub fine_width: usize,
    /// Sampling strides (rows, cols) between the fine level and the centers.
    pub stride: (usize, usize),
    /// Fine pixel of each center.
    pub center: Vec<Option<usize>>,
    /// Fine pixel of each slot; `None` outside the image or on an empty pixel.
    pub neighbor: Vec<Option<usize>>,
    /// Neighbor minus center position.
    pub local: Vec<[f64; 3]>,
    pub dist: Vec<f64>,
    /// 1 when the neighbor is valid and within the radius of a valid center.
    pub mask: Vec<f64>,
    /// `mask / max(dist, eps)`.
    pub inv_dist: Vec<f64>,
    /// Inverse kernel density per center, scaled so the maximum is 1; 0 on empty centers.
    pub inv_density: Vec<f64>,
}

impl NeighborhoodBundle {
    pub fn centers(&self) -> usize {
        self.center.len()
    }

    /// Unfold as a row mix from `[fine_len, C]` to `[M * slots, C]`.
    pub fn gather_mix(&self) -> RowMix {
        RowMix::gather(self.fine_len, &self.neighbor)
    }

    /// `[M, slots, 3]`.
    pub fn local_tensor(&self) -> Tensor {
        let data = self.local.iter().flat_map(|p| p.iter().copied()).collect();
        Tensor::new([self.centers(), self.slots, 3], data).expect("bundle shape")
    }

    /// `[M, slots, 1]`.
    pub fn mask_tensor(&self) -> Tensor {
        Tensor::new([self.centers(), self.slots, 1], self.mask.clone()).expect("bundle shape")
    }

    /// `[M, 1, 1]`.
    pub fn density_tensor(&self) -> Tensor {
        Tensor::new([self.centers(), 1, 1], self.inv_density.clone()).expect("bundle shape")
    }

    /// Indices of the masked neighbors of center `m`.
    pub fn masked_neighbors(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.slots).filter_map(move |s| {
            let i = m * self.slots + s;
            (self.mask[i] > 0.0).then(|| self.neighbor[i].expect("masked slot has a pixel"))
        })
    }
}

/// Fine pixel of every window slot around every center.
pub fn unfold_indices(
    level: &GridLevel,
    centers: &[Option<usize>],
    k: usize,
    dilation: (usize, usize),
) -> Result<Vec<Option<usize>>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::config(format!("window side k must be odd, got {k}")));
    }
    let (h, w) = (level.height as isize, level.width as isize);
    let half = (k / 2) as isize;
    let (dv, du) = (dilation.0 as isize, dilation.1 as isize);
    let mut out = Vec::with_capacity(centers.len() * k * k);
    for c in centers {
        let Some(c) = *c else {
            out.extend(core::iter::repeat(None).take(k * k));
            continue;
        };
        let (vc, uc) = ((c / level.width) as isize, (c % level.width) as isize);
        for a in -half..=half {
            let v = vc + a * dv;
            for b in -half..=half {
                if v < 0 || v >= h {
                    out.push(None);
                    continue;
                }
                let u = (uc + b * du).rem_euclid(w);
                let pix = (v * w + u) as usize;
                out.push(level.valid[pix].then_some(pix));
            }
        }
    }
    Ok(out)
}

/// Copies `source` (`[fine_len, C]`) into `[M, slots, C]`; empty slots are zero.
pub fn unfold(source: &Tensor, neighbor: &[Option<usize>], slots: usize) -> Result<Tensor> {
    let s = source.shape();
    if s.len() != 2 || slots == 0 || neighbor.len() % slots != 0 {
        return Err(Error::dim("unfold", s, &[neighbor.len(), slots]));
    }
    let c = s[1];
    let mut data = vec![0.0; neighbor.len() * c];
    for (slot, n) in neighbor.iter().enumerate() {
        if let Some(p) = *n {
            if p >= s[0] {
                return Err(Error::dim("unfold", s, &[p]));
            }
            data[slot * c..(slot + 1) * c].copy_from_slice(&source.data()[p * c..(p + 1) * c]);
        }
    }
    Tensor::new([neighbor.len() / slots, slots, c], data)
}

/// Local offsets, distances, radius mask and inverse distances.
pub fn localize(
    level: &GridLevel,
    centers: &[Option<usize>],
    neighbor: &[Option<usize>],
    slots: usize,
    radius: f64,
) -> (Vec<[f64; 3]>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = neighbor.len();
    let mut local = vec![[0.0; 3]; n];
    let mut dist = vec![0.0; n];
    let mut mask = vec![0.0; n];
    let mut inv = vec![0.0; n];
    for (m, c) in centers.iter().enumerate() {
        let Some(c) = *c else { continue };
        let pc = level.xyz[c];
        for s in 0..slots {
            let i = m * slots + s;
            let Some(p) = neighbor[i] else { continue };
            let q = level.xyz[p];
            let d = [q[0] - pc[0], q[1] - pc[1], q[2] - pc[2]];
            let r = math::norm3(d);
            local[i] = d;
            dist[i] = r;
            if r <= radius {
                mask[i] = 1.0;
                inv[i] = 1.0 / r.max(INV_DIST_EPS);
            }
        }
    }
    (local, dist, mask, inv)
}

/// Inverse of the Gaussian kernel density over each center's masked slots,
/// before any rescaling. Centers without masked slots get 0.
pub fn inverse_density_raw(dist: &[f64], mask: &[f64], slots: usize, sigma: f64) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    dist.chunks(slots)
        .zip(mask.chunks(slots))
        .map(|(d, m)| {
            let density: f64 = d
                .iter()
                .zip(m)
                .filter(|(_, &mv)| mv > 0.0)
                .map(|(&dv, _)| math::exp(-dv * dv / denom))
                .sum();
            if density > 0.0 {
                1.0 / density
            } else {
                0.0
            }
        })
        .collect()
}

/// [`inverse_density_raw`] divided by its maximum, so values lie in (0, 1].
pub fn inverse_density(dist: &[f64], mask: &[f64], slots: usize, sigma: f64) -> Vec<f64> {
    let mut d = inverse_density_raw(dist, mask, slots, sigma);
    let max = d.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        d.iter_mut().for_each(|v| *v /= max);
    }
    d
}

/// Builds the full bundle for one stage.
pub fn group(level: &GridLevel, sampling: &Sampling, cfg: &GroupingConfig) -> Result<NeighborhoodBundle> {
    cfg.validate()?;
    if sampling.fine_height != level.height || sampling.fine_width != level.width {
        return Err(Error::dim(
            "group",
            &[level.height, level.width],
            &[sampling.fine_height, sampling.fine_width],
        ));
    }
    let slots = cfg.slots();
    let neighbor = unfold_indices(level, &sampling.center, cfg.k, cfg.dilation)?;
    let (local, dist, mask, inv_dist) = localize(level, &sampling.center, &neighbor, slots, cfg.radius);
    let inv_density = inverse_density(&dist, &mask, slots, cfg.sigma);
    Ok(NeighborhoodBundle {
        height: sampling.height,
        width: sampling.width,
        slots,
        fine_len: level.len(),
        fine_width: level.width,
        stride: sampling.stride,
        center: sampling.center.clone(),
        neighbor,
        local,
        dist,
        mask,
        inv_dist,
        inv_density,
    })
}

/// Shared handle used by the network code.
pub fn gather_mix_arc(bundle: &NeighborhoodBundle) -> Arc<RowMix> {
    Arc::new(bundle.gather_mix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{select_centers, SampleGrid};

    fn flat_level(h: usize, w: usize) -> GridLevel {
        GridLevel {
            height: h,
            width: w,
            xyz: (0..h * w).map(|p| [(p / w) as f64, (p % w) as f64, 0.0]).collect(),
            valid: vec![true; h * w],
        }
    }

    #[test]
    fn k1_is_the_sampled_point() {
        let level = flat_level(4, 4);
        let s = select_centers(&level.valid, 4, 4, &SampleGrid::new(2, 2)).unwrap();
        let idx = unfold_indices(&level, &s.center, 1, (1, 1)).unwrap();
        assert_eq!(idx, s.center);
        let src = Tensor::from_fn([16, 2], |i| i as f64);
        let f = unfold(&src, &idx, 1).unwrap();
        assert_eq!(f.shape(), &[4, 1, 2]);
        assert_eq!(f.data()[..2], [10.0, 11.0]);
    }

    #[test]
    fn columns_wrap_rows_do_not() {
        let level = flat_level(3, 6);
        let idx = unfold_indices(&level, &[Some(6)], 3, (1, 1)).unwrap();
        // center (1, 0): left neighbors from column 5
        assert_eq!(
            idx,
            vec![Some(5), Some(0), Some(1), Some(11), Some(6), Some(7), Some(17), Some(12), Some(13)]
        );
        let idx = unfold_indices(&level, &[Some(0)], 3, (1, 1)).unwrap();
        assert_eq!(&idx[..3], &[None, None, None]);
        let idx = unfold_indices(&level, &[Some(7)], 3, (1, 2)).unwrap();
        assert_eq!(&idx[3..6], &[Some(11), Some(7), Some(9)]);
    }

    #[test]
    fn even_k_is_rejected() {
        assert!(unfold_indices(&flat_level(2, 2), &[Some(0)], 2, (1, 1)).is_err());
        assert!(GroupingConfig::new(4, 1.0).validate().is_err());
        assert!(GroupingConfig::new(3, 0.0).validate().is_err());
    }

    #[test]
    fn constant_image_fills_every_slot_alike() {
        let level = flat_level(3, 3);
        let idx = unfold_indices(&level, &[Some(4)], 3, (1, 1)).unwrap();
        let f = unfold(&Tensor::full([9, 2], 7.0), &idx, 9).unwrap();
        assert!(f.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn invalid_pixels_are_empty_slots() {
        let mut level = flat_level(3, 3);
        level.valid[1] = false;
        let idx = unfold_indices(&level, &[Some(4)], 3, (1, 1)).unwrap();
        assert_eq!(idx[1], None);
        let f = unfold(&Tensor::ones([9, 1]), &idx, 9).unwrap();
        assert_eq!(f.data()[1], 0.0);
    }

    #[test]
    fn self_slot_and_outside_ball() {
        let mut level = flat_level(1, 3);
        level.xyz = vec![[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]];
        let idx = unfold_indices(&level, &[Some(1)], 3, (1, 1)).unwrap();
        let (local, dist, mask, inv) = localize(&level, &[Some(1)], &idx, 9, 1.0);
        let c = 4;
        assert_eq!((local[c], dist[c], mask[c], inv[c]), ([0.0; 3], 0.0, 1.0, 1.0 / INV_DIST_EPS));
        assert_eq!((dist[3], mask[3], inv[3]), (2.0, 0.0, 0.0));
        assert_eq!((dist[5], mask[5], inv[5]), (0.5, 1.0, 2.0));
        assert_eq!(mask[0], 0.0);
    }

    #[test]
    fn density_examples() {
        // isolated: only the self slot
        let d = inverse_density_raw(&[0.0, 5.0], &[1.0, 0.0], 2, 1.0);
        assert_eq!(d, vec![1.0]);
        // two coincident points
        let d = inverse_density_raw(&[0.0, 0.0], &[1.0, 1.0], 2, 1.0);
        assert_eq!(d, vec![0.5]);
        // empty center
        assert_eq!(inverse_density_raw(&[0.0], &[0.0], 1, 1.0), vec![0.0]);
        // denser is smaller; rescaled max is 1
        let d = inverse_density(&[0.0, 0.3, 0.0, 0.9], &[1.0, 1.0, 1.0, 1.0], 2, 0.5);
        assert!(d[0] < d[1]);
        assert_eq!(d[1], 1.0);
    }
}

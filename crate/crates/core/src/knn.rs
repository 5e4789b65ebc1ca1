//! Range-image k-NN relabelling of the original points.
//!
//! Each point looks at the `w×w` pixels around its own pixel, keeps the
//! `k` valid ones whose range is closest to its own, and lets them vote with
//! weight `exp(-Δr² / 2σ²)`.

use alloc::format;
use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::math;
use crate::projection::RangeImage;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnConfig {
    /// Odd window side.
    pub window: usize,
    pub k: usize,
    /// Meters.
    pub sigma: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            window: 5,
            k: 5,
            sigma: 1.0,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::config(format!("k-NN window must be odd, got {}", self.window)));
        }
        if self.k == 0 || self.k > self.window * self.window {
            return Err(Error::config(format!(
                "k-NN needs 1 <= k <= {}, got {}",
                self.window * self.window,
                self.k
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::config("k-NN sigma must be positive"));
        }
        Ok(())
    }
}

/// Per-point labels voted from per-pixel predictions.
pub fn knn_refine(
    image: &RangeImage,
    pixel_preds: &[usize],
    cloud: &PointCloud,
    cfg: &KnnConfig,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if pixel_preds.len() != image.pixels() {
        return Err(Error::dim("knn_refine", &[image.height, image.width], &[pixel_preds.len()]));
    }
    if cloud.len() != image.pt2pix.len() {
        return Err(Error::dim("knn_refine", &[image.pt2pix.len()], &[cloud.len()]));
    }
    let (h, w) = (image.height as isize, image.width as isize);
    let half = (cfg.window / 2) as isize;
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(cfg.window * cfg.window);
    let mut votes: Vec<(usize, f64)> = Vec::new();
    let mut out = Vec::with_capacity(cloud.len());
    for (i, &(v, u)) in image.pt2pix.iter().enumerate() {
        let own = pixel_preds[v * image.width + u];
        let r = cloud.range(i);
        cand.clear();
        for a in -half..=half {
            let vv = v as isize + a;
            if vv < 0 || vv >= h {
                continue;
            }
            for b in -half..=half {
                let uu = (u as isize + b).rem_euclid(w);
                let pix = (vv * w + uu) as usize;
                if image.valid[pix] {
                    cand.push(((image.range(pix) - r).abs(), pix));
                }
            }
        }
        if cand.is_empty() {
            out.push(own);
            continue;
        }
        // Stable on equal gaps: window order (row-major) decides.
        cand.sort_by(|x, y| x.0.total_cmp(&y.0));
        votes.clear();
        for &(gap, pix) in cand.iter().take(cfg.k) {
            let weight = math::exp(-gap * gap / denom);
            let class = pixel_preds[pix];
            match votes.iter_mut().find(|(c, _)| *c == class) {
                Some(slot) => slot.1 += weight,
                None => votes.push((class, weight)),
            }
        }
        let top = votes.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = votes.iter().filter(|v| v.1 == top).map(|v| v.0).collect();
        out.push(if winners.len() == 1 { winners[0] } else { own });
    }
    Ok(out)
}

//! Spherical projection of a scan onto an H×W range image.
//!
//! Column `u = floor(0.5 (1 - yaw/π) W)` and row
//! `v = floor((1 - (pitch - fov_down) / (fov_up - fov_down)) H)`, both clamped
//! into the image. When several points land on one pixel the nearest one owns
//! it; the others still map to that pixel for label and prediction lookup.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::cloud::PointCloud;
use crate::math;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Channel order of [`RangeImage::channels`].
pub const CHANNELS: [&str; 5] = ["x", "y", "z", "range", "remission"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub height: usize,
    pub width: usize,
    /// Radians, upper edge of the vertical field of view.
    pub fov_up: f64,
    /// Radians, negative below the horizon.
    pub fov_down: f64,
}

impl Default for ProjectionConfig {
    /// HDL-64E geometry at 64×512.
    fn default() -> Self {
        Self::new(64, 512)
    }
}

impl ProjectionConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            fov_up: 3.0_f64.to_radians(),
            fov_down: (-25.0_f64).to_radians(),
        }
    }

    pub fn with_fov_deg(mut self, up: f64, down: f64) -> Self {
        self.fov_up = up.to_radians();
        self.fov_down = down.to_radians();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("projection height and width must be positive"));
        }
        if !(self.fov_up > self.fov_down) {
            return Err(Error::config("fov_up must exceed fov_down"));
        }
        Ok(())
    }

    /// `(row, col)` of a point, or `None` for a point at the origin.
    #[inline]
    pub fn pixel_of(&self, p: [f64; 3]) -> Option<(usize, usize)> {
        self.pixel_and_range(p).map(|(pix, _)| pix)
    }

    #[inline]
    fn pixel_and_range(&self, p: [f64; 3]) -> Option<((usize, usize), f64)> {
        let r = math::norm3(p);
        if r == 0.0 {
            return None;
        }
        Some((self.pixel_of_angles(math::atan2(p[1], p[0]), math::asin(p[2] / r)), r))
    }

    #[inline]
    fn pixel_of_angles(&self, yaw: f64, pitch: f64) -> (usize, usize) {
        let u = math::floor(0.5 * (1.0 - yaw / PI) * self.width as f64);
        let fov = self.fov_up - self.fov_down;
        let v = math::floor((1.0 - (pitch - self.fov_down) / fov) * self.height as f64);
        (clamp(v, self.height), clamp(u, self.width))
    }
}

fn clamp(x: f64, n: usize) -> usize {
    if x <= 0.0 {
        0
    } else if x >= (n - 1) as f64 {
        n - 1
    } else {
        x as usize
    }
}

/// Projected scan.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    pub height: usize,
    pub width: usize,
    /// `[5, H, W]`: x, y, z, range, remission. Zero on empty pixels.
    pub channels: Tensor,
    pub valid: Vec<bool>,
    /// Owning point of each pixel.
    pub pix2pt: Vec<Option<usize>>,
    /// Pixel `(row, col)` of every point, including points that lost a collision.
    pub pt2pix: Vec<(usize, usize)>,
    /// Points at the origin; they are mapped to the pixel straight ahead.
    pub skipped: usize,
}

impl RangeImage {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn channel(&self, c: usize, pix: usize) -> f64 {
        self.channels.data()[c * self.pixels() + pix]
    }

    pub fn xyz(&self, pix: usize) -> [f64; 3] {
        [self.channel(0, pix), self.channel(1, pix), self.channel(2, pix)]
    }

    pub fn range(&self, pix: usize) -> f64 {
        self.channel(3, pix)
    }

    pub fn remission(&self, pix: usize) -> f64 {
        self.channel(4, pix)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Flat pixel index of every point.
    pub fn point_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.pt2pix.iter().map(|&(r, c)| r * self.width + c)
    }
}

/// Projects `cloud` onto a range image; nearest point wins each pixel.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<RangeImage> {
    cfg.validate()?;
    cloud.validate(None)?;
    let (h, w) = (cfg.height, cfg.width);
    let hw = h * w;
    let mut owner: Vec<Option<usize>> = vec![None; hw];
    let mut best = vec![f64::INFINITY; hw];
    let mut pt2pix = Vec::with_capacity(cloud.len());
    let mut skipped = 0;
    for (i, &p) in cloud.xyz.iter().enumerate() {
        let Some(((v, u), r)) = cfg.pixel_and_range(p) else {
            skipped += 1;
            pt2pix.push(cfg.pixel_of_angles(0.0, 0.0));
            continue;
        };
        pt2pix.push((v, u));
        let pix = v * w + u;
        if r < best[pix] {
            best[pix] = r;
            owner[pix] = Some(i);
        }
    }
    let mut channels = vec![0.0; 5 * hw];
    for (pix, o) in owner.iter().enumerate() {
        if let Some(i) = *o {
            let [x, y, z] = cloud.xyz[i];
            for (c, value) in [x, y, z, best[pix], cloud.remission[i]].into_iter().enumerate() {
                channels[c * hw + pix] = value;
            }
        }
    }
    Ok(RangeImage {
        height: h,
        width: w,
        channels: Tensor::new([5, h, w], channels)?,
        valid: owner.iter().map(Option::is_some).collect(),
        pix2pt: owner,
        pt2pix,
        skipped,
    })
}

/// Per-point values from per-pixel values through `pt2pix`.
pub fn unproject<T: Copy>(image: &RangeImage, per_pixel: &[T]) -> Result<Vec<T>> {
    if per_pixel.len() != image.pixels() {
        return Err(Error::dim("unproject", &[image.height, image.width], &[per_pixel.len()]));
    }
    Ok(image.point_pixels().map(|pix| per_pixel[pix]).collect())
}
